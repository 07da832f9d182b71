"""Per-point pipeline, parameter sweeps, Gibbs fractions and trend fits.

A *point* is one ``ModelParams``.  Its pipeline is: build -> diagonalize
(or load the cached spectrum) -> level statistics -> beta(E) curves ->
per-state impurity verdicts -> Brody parameter and Gibbs fraction.  Every
point writes a directory of CSV files plus ``point.json``; a sweep adds
``summary.json``/``summary.csv`` and ``config.json`` at the top level.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit
from scipy.stats import spearmanr

from . import eigen, rdm, spectral, thermo
from .config import AnalysisOptions, SweepConfig
from .errors import FitError, TypicalityError
from .model import ModelParams, build_bath_hamiltonian, build_hamiltonian, enumerate_basis

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REFERENCE_GAMMA_TANH = (0.88, 0.15)
REFERENCE_G_TANH2 = 0.46


# --- fractions and fits -----------------------------------------------------


def gibbs_fraction(batch: rdm.StateBatch, threshold: float, window: spectral.Window | None = None) -> float:
    """Share of in-window states whose fit variance is at most ``threshold``.

    Unfittable states count as failures.
    """
    sel = batch if window is None else batch.subset(window.mask(batch.energy))
    if len(sel) == 0:
        raise ValueError("no states inside the window")
    return float(np.count_nonzero(sel.canonical(threshold)) / len(sel))


def gibbs_fraction_stats(batch, thresholds, window=None) -> tuple[float, float, list[float]]:
    values = [gibbs_fraction(batch, t, window) for t in thresholds]
    return float(np.mean(values)), float(np.std(values)), values


def _tanh_model(w, gamma0, w0):
    return gamma0 * np.tanh(w / w0)


def fit_gamma_tanh(w_bb, gamma, p0=(0.9, 0.2)) -> tuple[float, float]:
    """Least-squares ``gamma(W) = gamma0 * tanh(W / W0)``."""
    w_bb, gamma = np.asarray(w_bb, float), np.asarray(gamma, float)
    if w_bb.size < 3:
        raise ValueError("need at least three points")
    if not (np.all(np.isfinite(w_bb)) and np.all(np.isfinite(gamma))):
        raise FitError("tanh fit needs finite data")
    try:
        popt, _ = curve_fit(_tanh_model, w_bb, gamma, p0=p0, bounds=([0.0, 1e-6], [np.inf, np.inf]), xtol=1e-14, ftol=1e-14)
    except RuntimeError as exc:
        raise FitError(f"tanh fit did not converge: {exc}") from exc
    return float(popt[0]), float(popt[1])


def _tanh2_model(g, g0):
    return np.tanh(g / g0) ** 2


@dataclass(frozen=True)
class Tanh2Fit:
    gamma0: float
    residuals: np.ndarray

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))


def fit_g_tanh2(gamma, fraction, p0: float = 0.5) -> Tanh2Fit:
    """One-parameter least squares ``G(gamma) = tanh(gamma / gamma0')**2``."""
    gamma, fraction = np.asarray(gamma, float), np.asarray(fraction, float)
    if gamma.size < 3:
        raise ValueError("need at least three points")
    if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(fraction))):
        raise FitError("tanh^2 fit needs finite data")
    try:
        popt, _ = curve_fit(_tanh2_model, gamma, fraction, p0=[p0], bounds=([1e-6], [np.inf]), xtol=1e-14, ftol=1e-14)
    except RuntimeError as exc:
        raise FitError(f"tanh^2 fit did not converge: {exc}") from exc
    g0 = float(popt[0])
    return Tanh2Fit(g0, fraction - _tanh2_model(gamma, g0))


def spearman(x, y) -> float:
    return float(spearmanr(x, y).statistic)


# --- CSV helpers ------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return "nan" if np.isnan(value) else repr(value)


def write_csv(path: Path, header: list[str], rows, comment: str | None = None) -> Path:
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    cols = list(zip(*reader)) or [() for _ in header]
    out = {}
    for name, col in zip(header, cols):
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_hash(root: Path, pattern: str = "*.csv") -> str:
    """Combined hash of all matching files below ``root`` (relative paths included)."""
    h = hashlib.sha256()
    for path in sorted(Path(root).rglob(pattern)):
        h.update(str(path.relative_to(root)).encode())
        h.update(file_hash(path).encode())
    return h.hexdigest()


# --- spectra with caching ---------------------------------------------------


def spectrum_path(cache: Path, params: ModelParams) -> Path:
    return Path(cache) / "spectra" / f"{params.content_hash()}.ctsp"


def obtain_spectrum(params: ModelParams, cache: Path | None = None, mem_budget: int | None = None):
    """Load the cached decomposition of ``params`` or compute and cache it.

    Returns ``(spectrum, verification report dict, from_cache)``.
    """
    if cache is not None:
        path = spectrum_path(cache, params)
        side = path.with_suffix(".json")
        if path.exists() and side.exists():
            s = eigen.load_spectrum(path, expect_params=params)
            return s, json.loads(side.read_text()), True
    t0 = time.perf_counter()
    h = build_hamiltonian(enumerate_basis(params), params)
    s = eigen.diagonalize(h, mem_budget=mem_budget)
    report = eigen.verify_spectrum(h, s).to_dict()
    report["diagonalize_seconds"] = round(time.perf_counter() - t0, 3)
    log.info("diagonalized %s (d_H=%d) in %.1fs", params, s.dimension, report["diagonalize_seconds"])
    if cache is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        eigen.save_spectrum(s, path)
        # timing is machine-dependent; keep it out of the deterministic outputs
        write_json(side, {k: v for k, v in report.items() if k != "diagonalize_seconds"})
        s = eigen.load_spectrum(path, expect_params=params)
    report.pop("diagonalize_seconds", None)
    return s, report, False


# --- single point -----------------------------------------------------------


@dataclass
class PointResult:
    params: ModelParams
    gamma: float
    gamma_err: float
    gamma_pdf: float
    gamma_cdf: float
    mean_r: float
    n_degenerate: int
    G: float
    G_err: float
    G_by_threshold: list
    n_states: int
    n_window: int
    n_fittable: int
    median_distance: float
    window: dict
    spectral_window: dict
    beta_rms_diff: float
    beta_max_abs: float
    rdm_invariants: dict
    verification: dict

    @property
    def name(self) -> str:
        return point_name(self.params)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "params"}
        out["params"] = self.params.to_dict()
        out["name"] = self.name
        out["d_H"] = self.params.dimension
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PointResult":
        data = dict(data)
        data.pop("name", None)
        data.pop("d_H", None)
        params = ModelParams(**data.pop("params"))
        return cls(params=params, **data)


def point_name(params: ModelParams) -> str:
    return f"M{params.m_sites}_N{params.n_bath}_wbb{params.w_bb:g}"


def _point_key(params: ModelParams, options: AnalysisOptions) -> str:
    raw = f"{SCHEMA_VERSION}:{params.content_hash()}:{options.fingerprint()}"
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def _label(params: ModelParams) -> str:
    return f"M_s={params.m_sites} N_B={params.n_bath} W_BB={params.w_bb:g} W_IB={params.w_ib:g}"


@dataclass
class LevelStats:
    brody: spectral.BrodyFitResult
    ratios: spectral.GapRatioStats
    unfolded: spectral.UnfoldedSpectrum
    histogram: spectral.SpacingHistogram

    def to_dict(self) -> dict:
        return {
            "gamma": self.brody.gamma,
            "gamma_err": self.brody.gamma_err,
            "gamma_pdf": self.brody.gamma_pdf,
            "gamma_cdf": self.brody.gamma_cdf,
            "mean_r": self.ratios.mean_r,
            "n_degenerate": self.ratios.n_degenerate,
            "n_spacings": self.histogram.n_samples,
            "spectral_window": self.unfolded.window.to_dict(),
        }


def level_statistics(spectrum: eigen.SpectrumResult, options: AnalysisOptions, out_dir: Path) -> LevelStats:
    """DOS, staircase, spacing and gap-ratio tables plus the Brody fit."""
    out_dir.mkdir(parents=True, exist_ok=True)
    e = spectrum.eigenvalues
    label = _label(spectrum.params)
    dos = spectral.binned_dos(e, options.dos_bin_width)
    swin = spectral.resolve_window(e, options.spectral_window, options.dos_bin_width)
    shrunk = spectral.monotone_window(e, swin, options.staircase_degree)
    if shrunk != swin:
        dropped = np.count_nonzero(swin.mask(e)) - np.count_nonzero(shrunk.mask(e))
        log.warning("%s: staircase fit not monotone, spectral window shrunk by %d levels", label, dropped)
        swin = shrunk
    unfolded = spectral.unfold(e, swin, options.staircase_degree, min_levels=options.min_window_levels)
    hist = spectral.spacing_histogram(unfolded, options.spacing_bin_width)
    brody = spectral.fit_brody(hist)
    ratios = spectral.restricted_gap_ratios(e, swin, options.ratio_bin_width)

    write_csv(
        out_dir / "dos.csv",
        ["E_mid", "density", "normalized"],
        zip(dos.centers, dos.density, dos.normalized),
        f"binned density of states, bin width {options.dos_bin_width}; {label}",
    )
    write_csv(
        out_dir / "staircase.csv",
        ["E", "N", "N_smooth"],
        _staircase_rows(e, unfolded.smooth),
        f"spectral staircase and degree-{options.staircase_degree} fit; {label}",
    )
    write_csv(
        out_dir / "spacing.csv",
        ["s_mid", "density"],
        zip(hist.centers, hist.normalized_density),
        f"nearest-neighbour spacing density, bin width {options.spacing_bin_width}; {label}",
    )
    write_csv(
        out_dir / "gap_ratio.csv",
        ["r_mid", "density"],
        zip(ratios.centers, ratios.density),
        f"restricted gap-ratio density; {label}",
    )
    return LevelStats(brody, ratios, unfolded, hist)


def thermo_analysis(
    spectrum: eigen.SpectrumResult,
    options: AnalysisOptions,
    out_dir: Path,
    smooth: spectral.SmoothStaircase | None = None,
) -> dict:
    """beta(E) from the smoothed DOS (total and bath) and the canonical relation."""
    out_dir.mkdir(parents=True, exist_ok=True)
    params, e = spectrum.params, spectrum.eigenvalues
    if smooth is None:
        smooth = spectral.SmoothStaircase.fit(e, options.staircase_degree)
    bath_e = np.linalg.eigvalsh(build_bath_hamiltonian(params).to_dense())
    smooth_bath = (
        spectral.SmoothStaircase.fit(bath_e, options.staircase_degree) if len(bath_e) > options.staircase_degree else None
    )
    window = spectral.resolve_window(e, options.window, options.dos_bin_width)
    grid = beta_grid(e, window, options.beta_grid_points)
    curve = thermo.beta_curve(e, smooth, grid, smooth_bath, (float(bath_e[0]), float(bath_e[-1])))
    write_csv(
        out_dir / "beta.csv",
        ["E", "beta_micro_total", "beta_micro_bath", "beta_canonical"],
        curve.rows(),
        f"inverse temperature from smoothed DOS (total, bath) and canonical relation; {_label(params)}",
    )
    ok = np.isfinite(curve.beta_micro_total) & np.isfinite(curve.beta_canonical)
    diff = curve.beta_micro_total[ok] - curve.beta_canonical[ok]
    return {
        "window": window.to_dict(),
        "n_grid": int(len(grid)),
        "beta_rms_diff": float(np.sqrt(np.mean(diff**2))) if diff.size else float("nan"),
        "beta_max_abs": float(np.max(np.abs(curve.beta_canonical[ok]))) if diff.size else float("nan"),
    }



def rdm_analysis(spectrum: eigen.SpectrumResult, options: AnalysisOptions, out_dir: Path) -> dict:
    """Per-state Boltzmann fits, Gibbs distances and the Gibbs fraction G."""
    out_dir.mkdir(parents=True, exist_ok=True)
    e = spectrum.eigenvalues
    window = spectral.resolve_window(e, options.window, options.dos_bin_width)
    batch = rdm.analyze_states(spectrum, floor=options.occupation_floor)
    write_csv(
        out_dir / "verdicts.csv",
        ["alpha", "E_alpha", "beta_fit", "beta_err", "gibbs_distance", "n_orbitals_used"],
        zip(batch.alpha, batch.energy, batch.beta_fit, batch.beta_err, batch.gibbs_distance, batch.n_orbitals_used),
        f"per-state Boltzmann fit (beta_err = variance of beta) and trace distance to Gibbs state; {_label(spectrum.params)}",
    )
    in_win = batch.subset(window.mask(batch.energy))
    g_mean, g_std, g_values = gibbs_fraction_stats(batch, options.thresholds, window)
    dist = in_win.gibbs_distance[np.isfinite(in_win.gibbs_distance)]
    finite = batch.gibbs_distance[np.isfinite(batch.gibbs_distance)]
    return {
        "G": g_mean,
        "G_err": g_std,
        "G_by_threshold": g_values,
        "thresholds": list(options.thresholds),
        "n_states": len(batch),
        "n_window": len(in_win),
        "n_fittable": int(np.count_nonzero(in_win.fittable)),
        "median_distance": float(np.median(dist)) if dist.size else float("nan"),
        "window": window.to_dict(),
        "rdm_invariants": {
            "max_trace_defect": batch.max_trace_defect,
            "min_rdm_eigenvalue": batch.min_rdm_eigenvalue,
            "max_asymmetry": batch.max_asymmetry,
            "max_density_defect": batch.max_density_defect,
            "min_gibbs_distance": float(finite.min()) if finite.size else float("nan"),
            "max_gibbs_distance": float(finite.max()) if finite.size else float("nan"),
        },
    }


def analyze_point(
    spectrum: eigen.SpectrumResult, options: AnalysisOptions, out_dir: Path, verification: dict | None = None
) -> PointResult:
    """Run every analysis on one spectrum and write its CSV files to ``out_dir``."""
    stats = level_statistics(spectrum, options, out_dir)
    th = thermo_analysis(spectrum, options, out_dir, stats.unfolded.smooth)
    rd = rdm_analysis(spectrum, options, out_dir)
    result = PointResult(
        params=spectrum.params,
        gamma=stats.brody.gamma,
        gamma_err=stats.brody.gamma_err,
        gamma_pdf=stats.brody.gamma_pdf,
        gamma_cdf=stats.brody.gamma_cdf,
        mean_r=stats.ratios.mean_r,
        n_degenerate=stats.ratios.n_degenerate,
        G=rd["G"],
        G_err=rd["G_err"],
        G_by_threshold=rd["G_by_threshold"],
        n_states=rd["n_states"],
        n_window=rd["n_window"],
        n_fittable=rd["n_fittable"],
        median_distance=rd["median_distance"],
        window=rd["window"],
        spectral_window=stats.unfolded.window.to_dict(),
        beta_rms_diff=th["beta_rms_diff"],
        beta_max_abs=th["beta_max_abs"],
        rdm_invariants=rd["rdm_invariants"],
        verification=dict(verification or {}),
    )
    write_json(out_dir / "point.json", result.to_dict())
    return result


def beta_grid(e: np.ndarray, window: spectral.Window, points: int) -> np.ndarray:
    """Energies of in-window states (ground state excluded), evenly thinned to ``points``."""
    levels = e[window.mask(e) & (e > e[0]) & (e < e[-1])]
    if levels.size <= points:
        return levels
    return levels[np.unique(np.linspace(0, levels.size - 1, points).round().astype(int))]


def _staircase_rows(e: np.ndarray, smooth, max_points: int = 2000):
    idx = np.unique(np.linspace(0, len(e) - 1, min(max_points, len(e))).astype(int))
    return zip(e[idx], idx + 1, smooth(e[idx]))


def run_point(
    params: ModelParams,
    options: AnalysisOptions,
    out_dir: Path,
    cache: Path | None = None,
    mem_budget: int | None = None,
) -> PointResult:
    """Full pipeline for one point; results are reused from ``cache`` when present."""
    out_dir = Path(out_dir)
    if cache is not None:
        stored = Path(cache) / "points" / _point_key(params, options)
        if (stored / "point.json").exists():
            _copy_tree(stored, out_dir)
            return PointResult.from_dict(json.loads((out_dir / "point.json").read_text()))
    try:
        spectrum, report, _ = obtain_spectrum(params, cache, mem_budget)
        result = analyze_point(spectrum, options, out_dir, report)
    except TypicalityError as exc:
        raise type(exc)(f"[{point_name(params)}] {exc}") from exc
    if cache is not None:
        _copy_tree(out_dir, stored)
    return result


def _copy_tree(src: Path, dst: Path) -> None:
    tmp = dst.with_name(dst.name + ".part")
    if tmp.exists():
        shutil.rmtree(tmp)
    shutil.copytree(src, tmp)
    if dst.exists():
        shutil.rmtree(dst)
    os.replace(tmp, dst)


# --- sweeps -----------------------------------------------------------------


@dataclass
class SweepResult:
    points: list[PointResult]
    gamma_tanh: dict
    g_tanh2: dict
    spearman_gamma_G: float

    def summary_rows(self):
        for p in self.points:
            yield {
                "m_sites": p.params.m_sites,
                "n_bath": p.params.n_bath,
                "w_bb": p.params.w_bb,
                "gamma": p.gamma,
                "gamma_err": p.gamma_err,
                "G": p.G,
                "G_err": p.G_err,
                "mean_r": p.mean_r,
                "n_window": p.n_window,
                "median_distance": p.median_distance,
            }

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "points": list(self.summary_rows()),
            "gamma_tanh": self.gamma_tanh,
            "G_tanh2": self.g_tanh2,
            "spearman_gamma_G": self.spearman_gamma_G,
        }


def summarize(points: list[PointResult]) -> SweepResult:
    """Trend fits over a set of points (skipped where too few points exist)."""
    gamma_tanh = {}
    for size in sorted({(p.params.m_sites, p.params.n_bath) for p in points}):
        pts = [p for p in points if (p.params.m_sites, p.params.n_bath) == size]
        key = f"M{size[0]}_N{size[1]}"
        if len(pts) < 3:
            continue
        try:
            g0, w0 = fit_gamma_tanh([p.params.w_bb for p in pts], [p.gamma for p in pts])
            gamma_tanh[key] = {"gamma0": g0, "w_bb0": w0}
        except FitError as exc:
            gamma_tanh[key] = {"error": str(exc)}
    g_tanh2: dict = {}
    if len(points) >= 3:
        try:
            fit = fit_g_tanh2([p.gamma for p in points], [p.G for p in points])
            g_tanh2 = {"gamma0_prime": fit.gamma0, "rms_residual": fit.rms, "residuals": fit.residuals.tolist()}
        except FitError as exc:
            g_tanh2 = {"error": str(exc)}
    rho = spearman([p.gamma for p in points], [p.G for p in points]) if len(points) >= 3 else float("nan")
    return SweepResult(points, gamma_tanh, g_tanh2, rho)


def run_sweep(config: SweepConfig, out_dir: Path, cache: Path | None = None) -> SweepResult:
    """Run every (size, W_BB) point, then write ``summary.json``/``summary.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "config.json", config.to_dict())
    points = []
    for params in config.points():
        log.info("sweep point %s", point_name(params))
        points.append(run_point(params, config.analysis, out_dir / "points" / point_name(params), cache, config.memory_budget))
    result = summarize(points)
    write_json(out_dir / "summary.json", result.to_dict())
    rows = list(result.summary_rows())
    write_csv(out_dir / "summary.csv", list(rows[0]), (r.values() for r in rows))
    return result


def load_sweep(out_dir: Path) -> tuple[list[PointResult], dict]:
    out_dir = Path(out_dir)
    summary = json.loads((out_dir / "summary.json").read_text())
    points = [
        PointResult.from_dict(json.loads(p.read_text()))
        for p in sorted((out_dir / "points").glob("*/point.json"))
    ]
    return points, summary
