import json

import numpy as np
import pytest

from typicality import eigen, experiment
from typicality.config import AnalysisOptions, SweepConfig
from typicality.errors import FitError
from typicality.experiment import (
    fit_g_tanh2,
    fit_gamma_tanh,
    gibbs_fraction,
    gibbs_fraction_stats,
    load_sweep,
    read_csv,
    run_sweep,
    spearman,
    tree_hash,
    write_csv,
)
from typicality.rdm import StateBatch
from typicality.spectral import Window


def batch(beta_err, n_used=None, energy=None):
    beta_err = np.asarray(beta_err, dtype=float)
    k = len(beta_err)
    return StateBatch(
        alpha=np.arange(k),
        energy=np.arange(k, dtype=float) if energy is None else np.asarray(energy),
        beta_fit=np.ones(k),
        beta_err=beta_err,
        gibbs_distance=np.zeros(k),
        n_orbitals_used=np.full(k, 5) if n_used is None else np.asarray(n_used),
        max_trace_defect=0.0,
        min_rdm_eigenvalue=0.0,
        max_asymmetry=0.0,
        max_density_defect=0.0,
    )


# --- Gibbs fraction ---------------------------------------------------------


def test_fraction_all_perfect():
    assert gibbs_fraction(batch(np.zeros(10)), 1e-3) == 1.0


def test_fraction_all_unfittable():
    b = batch(np.full(6, np.nan), n_used=np.full(6, 1))
    assert gibbs_fraction(b, 1.0) == 0.0


def test_fraction_monotone_in_threshold():
    rng = np.random.default_rng(4)
    b = batch(rng.exponential(0.01, 200))
    values = [gibbs_fraction(b, t) for t in np.linspace(1e-4, 0.05, 40)]
    assert all(x <= y for x, y in zip(values, values[1:]))


def test_fraction_respects_window():
    b = batch([0.0, 1.0, 0.0, 1.0], energy=[0.0, 1.0, 2.0, 3.0])
    assert gibbs_fraction(b, 0.5, Window(0.0, 2.0)) == pytest.approx(2 / 3)
    mean, std, values = gibbs_fraction_stats(b, [0.5, 2.0], Window(0.0, 2.0))
    assert values == pytest.approx([2 / 3, 1.0])
    assert mean == pytest.approx(5 / 6) and std == pytest.approx(1 / 6)


# --- trend fits -------------------------------------------------------------


def test_tanh_fit_recovers_parameters():
    w = np.array([0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0])
    g0, w0 = fit_gamma_tanh(w, 0.9 * np.tanh(w / 0.2))
    assert g0 == pytest.approx(0.9, abs=1e-6) and w0 == pytest.approx(0.2, abs=1e-6)


def test_tanh2_fit_recovers_parameter():
    g = np.linspace(0.05, 1.0, 12)
    fit = fit_g_tanh2(g, np.tanh(g / 0.46) ** 2)
    assert fit.gamma0 == pytest.approx(0.46, abs=1e-6)
    assert fit.rms == pytest.approx(0.0, abs=1e-8)
    assert np.tanh(0.0 / fit.gamma0) ** 2 == 0.0


def test_tanh_fit_failure_is_reported():
    with pytest.raises(FitError):
        fit_gamma_tanh([0.1, 0.2, 0.3], [np.nan, 0.1, 0.2])


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)


# --- files ------------------------------------------------------------------


def test_csv_roundtrip(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.1), (2, np.nan), (3, 1e-300)], "figure x\nschema 1")
    lines = path.read_text().splitlines()
    assert lines[:3] == ["# figure x", "# schema 1", "a,b"]
    t = read_csv(path)
    np.testing.assert_array_equal(t["a"], [1, 2, 3])
    assert t["b"][0] == 0.1 and np.isnan(t["b"][1]) and t["b"][2] == 1e-300


# --- sweep pipeline ---------------------------------------------------------

SMALL = dict(sizes=((8, 4), (9, 4)), w_bb_grid=(0.2, 1.0), analysis=AnalysisOptions(min_window_levels=100))


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    cfg = SweepConfig(**SMALL)
    result = run_sweep(cfg, root / "run1", root / "cache")
    return cfg, root, result


def test_sweep_tree(sweep):
    cfg, root, result = sweep
    out = root / "run1"
    assert (out / "config.json").exists() and (out / "summary.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert {"m_sites", "n_bath", "w_bb", "gamma", "gamma_err", "G", "G_err", "mean_r"} <= set(summary["points"][0])
    assert len(summary["points"]) == 4
    for p in result.points:
        d = out / "points" / p.name
        for name in ("dos", "staircase", "spacing", "gap_ratio", "beta", "verdicts"):
            assert (d / f"{name}.csv").exists()
        assert p.verification["max_residual"] < 1e-10 * max(p.verification["scale"], 1)
    points, _ = load_sweep(out)
    assert [p.to_dict() for p in points] == [p.to_dict() for p in sorted(result.points, key=lambda q: q.name)]


def test_gamma_grows_with_size(sweep):
    _, _, result = sweep
    at = {(p.params.m_sites, p.params.w_bb): p.gamma for p in result.points}
    assert at[(9, 0.2)] > at[(8, 0.2)]


def test_cached_rerun_is_bitwise_identical(sweep, monkeypatch):
    cfg, root, _ = sweep

    def forbidden(*args, **kwargs):
        raise AssertionError("cache miss: diagonalize called")

    monkeypatch.setattr(eigen, "diagonalize", forbidden)
    run_sweep(cfg, root / "run2", root / "cache")
    assert tree_hash(root / "run1") == tree_hash(root / "run2")
    assert (root / "run1" / "summary.json").read_bytes() == (root / "run2" / "summary.json").read_bytes()


def test_spectrum_cache_reuse_gives_identical_outputs(sweep, tmp_path):
    cfg, root, _ = sweep
    # drop the per-point cache so the analysis reruns on the cached spectra
    cache = tmp_path / "cache"
    (cache / "spectra").mkdir(parents=True)
    for f in (root / "cache" / "spectra").iterdir():
        (cache / "spectra" / f.name).write_bytes(f.read_bytes())
    run_sweep(cfg, tmp_path / "run3", cache)
    assert tree_hash(root / "run1") == tree_hash(tmp_path / "run3")


def test_fresh_run_is_deterministic(sweep, tmp_path):
    cfg, root, _ = sweep
    one = SweepConfig(sizes=((8, 4),), w_bb_grid=(1.0,), analysis=cfg.analysis)
    run_sweep(one, tmp_path / "a")
    run_sweep(one, tmp_path / "b")
    assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
    src = root / "run1" / "points" / "M8_N4_wbb1"
    assert experiment.file_hash(src / "verdicts.csv") == experiment.file_hash(tmp_path / "a" / "points" / "M8_N4_wbb1" / "verdicts.csv")
