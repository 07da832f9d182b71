import json

import pytest

from typicality.config import (
    DEFAULT_THRESHOLDS,
    DEFAULT_W_BB_GRID,
    AnalysisOptions,
    RunConfig,
    SweepConfig,
    load_structured,
)
from typicality.errors import ConfigError
from typicality.model import ModelParams


def test_defaults():
    a = AnalysisOptions()
    assert a.window == "dos" and a.dos_bin_width == 0.4 and a.spacing_bin_width == 0.01
    assert a.thresholds == DEFAULT_THRESHOLDS
    assert DEFAULT_THRESHOLDS[0] == pytest.approx(5e-3) and DEFAULT_THRESHOLDS[-1] == pytest.approx(1.5e-2)
    assert {0.01, 0.05, 0.1, 0.2, 0.5, 1.0} <= set(DEFAULT_W_BB_GRID)


@pytest.mark.parametrize(
    "data",
    [
        {"window": "middle"},
        {"window": [1.0, 0.5]},
        {"dos_bin_width": 0},
        {"thresholds": []},
        {"thresholds": [-1e-3]},
        {"staircase_degree": 0},
        {"bogus": 1},
    ],
)
def test_analysis_rejects(data):
    with pytest.raises(ConfigError):
        AnalysisOptions.from_mapping(data)


def test_analysis_window_pair_and_fingerprint():
    a = AnalysisOptions.from_mapping({"window": [-3, 1], "thresholds": [0.02, 0.01]})
    assert a.window == (-3.0, 1.0) and a.thresholds == (0.01, 0.02)
    assert a.to_dict()["window"] == [-3.0, 1.0]
    assert a.fingerprint() == AnalysisOptions.from_mapping(a.to_dict()).fingerprint()
    assert a.fingerprint() != AnalysisOptions().fingerprint()


def test_run_config_json_and_yaml(tmp_path):
    data = {"model": {"m_sites": 6, "n_bath": 3, "w_bb": 0.5}, "analysis": {"window": "full"}, "threads": 2}
    j = tmp_path / "c.json"
    j.write_text(json.dumps(data))
    y = tmp_path / "c.yaml"
    y.write_text("model: {m_sites: 6, n_bath: 3, w_bb: 0.5}\nanalysis: {window: full}\nthreads: 2\n")
    a, b = RunConfig.load(j), RunConfig.load(y)
    assert a == b
    assert a.model == ModelParams(6, 3, w_bb=0.5)
    assert RunConfig.from_mapping(a.to_dict()) == a


@pytest.mark.parametrize(
    "data",
    [
        {},
        {"model": {"m_sites": 3, "n_bath": 4}},
        {"model": {"m_sites": 4, "n_bath": 2}, "extra": 1},
        {"model": {"m_sites": 4, "n_bath": 2}, "threads": 0},
        {"model": {"m_sites": 4, "n_bath": 2}, "memory_budget_gib": -1},
    ],
)
def test_run_config_rejects(data):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping(data)


def test_load_structured_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_structured(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_structured(bad)
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_structured(lst)


def test_sweep_manifest():
    cfg = SweepConfig.from_mapping(
        {"sizes": [[6, 3], [7, 3]], "w_bb_grid": [0.1, 1], "thresholds": [0.01], "model": {"w_ib": 0.5}}
    )
    pts = list(cfg.points())
    assert len(pts) == 4
    assert pts[0] == ModelParams(6, 3, w_bb=0.1, w_ib=0.5)
    assert cfg.thresholds == (0.01,)
    assert SweepConfig.from_mapping(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "data",
    [
        {"sizes": [[3, 4]]},
        {"sizes": [[6]]},
        {"w_bb_grid": []},
        {"model": {"w_bb": 1.0}},
        {"thresholds": [0.01], "analysis": {"thresholds": [0.02]}},
        {"unknown": True},
    ],
)
def test_sweep_rejects(data):
    with pytest.raises(ConfigError):
        SweepConfig.from_mapping(data)
