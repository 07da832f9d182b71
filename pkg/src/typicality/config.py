"""Structured configuration: model, analysis options, run and sweep manifests.

Files are JSON (``.json``) or YAML (``.yaml``/``.yml``).  Unknown keys are
rejected everywhere so that typos fail loudly before any computation.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import ConfigError
from .model import ModelParams

DEFAULT_W_BB_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0)
DEFAULT_THRESHOLDS = tuple(float(x) for x in np.linspace(5e-3, 1.5e-2, 5))


def load_structured(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _reject_unknown(data: Mapping, allowed, where: str) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _window_rule(value):
    if value in ("dos", "full"):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 2:
        lo, hi = (float(v) for v in value)
        if not lo < hi:
            raise ConfigError(f"window bounds must satisfy lo < hi, got {value}")
        return (lo, hi)
    raise ConfigError(f"window must be 'dos', 'full' or [lo, hi], got {value!r}")


@dataclass(frozen=True)
class AnalysisOptions:
    window: Any = "dos"
    spectral_window: Any = "dos"
    dos_bin_width: float = 0.4
    spacing_bin_width: float = 0.01
    ratio_bin_width: float = 0.02
    staircase_degree: int = 10
    occupation_floor: float = 1e-12
    beta_grid_points: int = 401
    min_window_levels: int = 500
    thresholds: tuple = DEFAULT_THRESHOLDS

    def __post_init__(self):
        object.__setattr__(self, "window", _window_rule(self.window))
        object.__setattr__(self, "spectral_window", _window_rule(self.spectral_window))
        for name in ("dos_bin_width", "spacing_bin_width", "ratio_bin_width", "occupation_floor"):
            value = float(getattr(self, name))
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)
        if int(self.staircase_degree) < 1:
            raise ConfigError("staircase_degree must be >= 1")
        if int(self.beta_grid_points) < 3:
            raise ConfigError("beta_grid_points must be >= 3")
        object.__setattr__(self, "staircase_degree", int(self.staircase_degree))
        object.__setattr__(self, "beta_grid_points", int(self.beta_grid_points))
        if int(self.min_window_levels) < 3:
            raise ConfigError("min_window_levels must be >= 3")
        object.__setattr__(self, "min_window_levels", int(self.min_window_levels))
        th = tuple(sorted(float(t) for t in self.thresholds))
        if not th or th[0] <= 0:
            raise ConfigError(f"thresholds must be a non-empty list of positive numbers, got {self.thresholds}")
        object.__setattr__(self, "thresholds", th)

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> "AnalysisOptions":
        data = dict(data or {})
        _reject_unknown(data, {f.name for f in fields(cls)}, "analysis")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("window", "spectral_window"):
            if isinstance(out[key], tuple):
                out[key] = list(out[key])
        out["thresholds"] = list(out["thresholds"])
        return out

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _budget_bytes(gib) -> int:
    value = float(gib)
    if not value > 0:
        raise ConfigError(f"memory budget must be positive, got {gib}")
    return int(value * 1024**3)


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    memory_budget_gib: float = 8.0
    threads: int | None = None
    out: str | None = None
    cache: str | None = None

    _KEYS = ("model", "analysis", "memory_budget_gib", "threads", "out", "cache")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "RunConfig":
        _reject_unknown(data, cls._KEYS, "config")
        if "model" not in data:
            raise ConfigError("config is missing the 'model' section")
        threads = data.get("threads")
        if threads is not None and (not isinstance(threads, int) or threads < 1):
            raise ConfigError(f"threads must be a positive integer, got {threads!r}")
        cfg = cls(
            model=ModelParams.from_mapping(data["model"]),
            analysis=AnalysisOptions.from_mapping(data.get("analysis")),
            memory_budget_gib=float(data.get("memory_budget_gib", 8.0)),
            threads=threads,
            out=data.get("out"),
            cache=data.get("cache"),
        )
        _budget_bytes(cfg.memory_budget_gib)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_mapping(load_structured(path))

    @property
    def memory_budget(self) -> int:
        return _budget_bytes(self.memory_budget_gib)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "analysis": self.analysis.to_dict(),
            "memory_budget_gib": self.memory_budget_gib,
            "threads": self.threads,
            "out": self.out,
            "cache": self.cache,
        }


@dataclass(frozen=True)
class SweepConfig:
    """Grid of (size, W_BB) points sharing all other couplings."""

    sizes: tuple = ((12, 6),)
    w_bb_grid: tuple = DEFAULT_W_BB_GRID
    model: Mapping = field(default_factory=dict)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    memory_budget_gib: float = 8.0
    threads: int | None = None

    _KEYS = ("sizes", "w_bb_grid", "thresholds", "model", "analysis", "memory_budget_gib", "threads")

    def __post_init__(self):
        sizes = []
        for item in self.sizes:
            if len(item) != 2:
                raise ConfigError(f"size entries must be [m_sites, n_bath], got {item!r}")
            sizes.append((int(item[0]), int(item[1])))
        object.__setattr__(self, "sizes", tuple(sizes))
        grid = tuple(float(w) for w in self.w_bb_grid)
        if not grid:
            raise ConfigError("w_bb_grid is empty")
        object.__setattr__(self, "w_bb_grid", grid)
        _reject_unknown(self.model, {f.name for f in fields(ModelParams)} - {"m_sites", "n_bath", "w_bb"}, "sweep model")
        list(self.points())  # validates every point up front
        _budget_bytes(self.memory_budget_gib)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "SweepConfig":
        _reject_unknown(data, cls._KEYS, "sweep manifest")
        analysis = dict(data.get("analysis") or {})
        if "thresholds" in data:
            if "thresholds" in analysis:
                raise ConfigError("thresholds given both at top level and in analysis")
            analysis["thresholds"] = data["thresholds"]
        return cls(
            sizes=tuple(tuple(s) for s in data.get("sizes", ((12, 6),))),
            w_bb_grid=tuple(data.get("w_bb_grid", DEFAULT_W_BB_GRID)),
            model=dict(data.get("model") or {}),
            analysis=AnalysisOptions.from_mapping(analysis),
            memory_budget_gib=float(data.get("memory_budget_gib", 8.0)),
            threads=data.get("threads"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SweepConfig":
        return cls.from_mapping(load_structured(path))

    @property
    def thresholds(self) -> tuple:
        return self.analysis.thresholds

    @property
    def memory_budget(self) -> int:
        return _budget_bytes(self.memory_budget_gib)

    def points(self):
        for m, n in self.sizes:
            for w in self.w_bb_grid:
                yield ModelParams(m_sites=m, n_bath=n, w_bb=w, **self.model)

    def to_dict(self) -> dict:
        return {
            "sizes": [list(s) for s in self.sizes],
            "w_bb_grid": list(self.w_bb_grid),
            "model": dict(self.model),
            "analysis": self.analysis.to_dict(),
            "memory_budget_gib": self.memory_budget_gib,
            "threads": self.threads,
        }
