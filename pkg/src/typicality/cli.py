"""Command-line entry point: ``typicality <subcommand> ...``.

Every subcommand writes into an output directory that carries an
``INCOMPLETE`` marker while it runs and a ``config.json`` echo of the
resolved configuration.  Failures print ``{"error": code, "message": ...}``
on stderr and exit with the error's code (2 for invalid configuration).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__, eigen
from .config import AnalysisOptions, RunConfig, SweepConfig, load_structured
from .errors import ConfigError, SpectrumFileError, TypicalityError
from .experiment import (
    file_hash,
    level_statistics,
    obtain_spectrum,
    rdm_analysis,
    run_sweep,
    thermo_analysis,
    write_json,
)
from .model import ModelParams
from .report import build_report

log = logging.getLogger("typicality")

INCOMPLETE = "INCOMPLETE"


@contextlib.contextmanager
def _output_dir(path: Path, resolved: dict):
    """Create ``path``, flag it incomplete, echo the config, clear the flag on success."""
    path.mkdir(parents=True, exist_ok=True)
    marker = path / INCOMPLETE
    marker.write_text("run did not finish; outputs in this directory are partial\n")
    write_json(path / "config.json", resolved)
    yield path
    marker.unlink()


def _need_out(args) -> Path:
    if args.out is None:
        raise ConfigError("--out DIR is required")
    return Path(args.out)


def _analysis_from(args) -> tuple[AnalysisOptions, ModelParams | None]:
    """Analysis options (and optional expected model) from ``--config``."""
    if args.config is None:
        return AnalysisOptions(), None
    data = load_structured(args.config)
    unknown = set(data) - set(RunConfig._KEYS)
    if unknown:
        raise ConfigError(f"unknown keys in config: {sorted(unknown)}")
    model = ModelParams.from_mapping(data["model"]) if "model" in data else None
    return AnalysisOptions.from_mapping(data.get("analysis")), model


def _load(args, vectors: bool):
    path = Path(args.spectrum)
    if not path.is_file():
        raise SpectrumFileError(f"spectrum file not found: {path}")
    options, expect = _analysis_from(args)
    s = eigen.load_spectrum(path, expect_params=expect, vectors=vectors)
    resolved = {
        "spectrum": str(path.resolve()),
        "spectrum_sha256": file_hash(path),
        "model": s.params.to_dict(),
        "analysis": options.to_dict(),
    }
    return s, options, resolved


def cmd_spectrum(args) -> dict:
    if args.config is None:
        raise ConfigError("spectrum needs --config with a 'model' section")
    cfg = RunConfig.load(args.config)
    out = Path(args.out or cfg.out or ".")
    budget = int(args.mem_budget * 1024**3) if args.mem_budget else cfg.memory_budget
    cache = args.cache or cfg.cache
    eigen.check_budget(cfg.model.dimension, budget)
    resolved = cfg.to_dict() | {"out": str(out), "cache": cache, "memory_budget_gib": budget / 1024**3}
    with _output_dir(out, resolved):
        s, report, from_cache = obtain_spectrum(cfg.model, Path(cache) if cache else None, budget)
        target = eigen.save_spectrum(s, out / "spectrum.ctsp")
        # re-read what was written so exit 0 means a loadable file
        eigen.load_spectrum(target, expect_params=cfg.model, vectors=False)
        write_json(out / "verification.json", report)
    return {"spectrum": str(target), "d_H": s.dimension, "from_cache": from_cache, **report}


def cmd_stats(args) -> dict:
    s, options, resolved = _load(args, vectors=False)
    out = _need_out(args)
    with _output_dir(out, resolved):
        stats = level_statistics(s, options, out)
        summary = stats.to_dict()
        write_json(out / "stats.json", summary)
    return summary


def cmd_thermo(args) -> dict:
    s, options, resolved = _load(args, vectors=False)
    out = _need_out(args)
    with _output_dir(out, resolved):
        summary = thermo_analysis(s, options, out)
        write_json(out / "thermo.json", summary)
    return summary


def cmd_rdm(args) -> dict:
    s, options, resolved = _load(args, vectors=True)
    out = _need_out(args)
    with _output_dir(out, resolved):
        summary = rdm_analysis(s, options, out)
        write_json(out / "rdm.json", summary)
    return summary


def cmd_sweep(args) -> dict:
    if args.config is None:
        raise ConfigError("sweep needs --config pointing at a sweep manifest")
    cfg = SweepConfig.load(args.config)
    if args.mem_budget:
        cfg = SweepConfig(cfg.sizes, cfg.w_bb_grid, cfg.model, cfg.analysis, args.mem_budget, cfg.threads)
    out = _need_out(args)
    with _output_dir(out, cfg.to_dict()):
        result = run_sweep(cfg, out, Path(args.cache) if args.cache else None)
    return {"points": len(result.points), "spearman_gamma_G": result.spearman_gamma_G}


def cmd_report(args) -> dict:
    src = Path(args.results)
    if (src / INCOMPLETE).exists():
        raise TypicalityError(f"{src} is flagged {INCOMPLETE}; rerun the sweep first")
    out = Path(args.out) if args.out else src / "report"
    with _output_dir(out, {"results": str(src.resolve()), "render": not args.no_png}):
        written = build_report(src, out, render=not args.no_png)
    return {"files": sorted(p.name for p in written.values())}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON or YAML configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, metavar="N", help="BLAS/LAPACK thread count")
    common.add_argument("--mem-budget", type=float, metavar="GIB", help="refuse dense work above this many GiB")
    common.add_argument("--cache", metavar="DIR", help="spectrum and sweep-point cache directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="typicality", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="build and diagonalize H, write spectrum.ctsp")
    p.set_defaults(func=cmd_spectrum)
    for name, func, text in (
        ("stats", cmd_stats, "level statistics: DOS, staircase, spacing and gap-ratio tables"),
        ("thermo", cmd_thermo, "microcanonical and canonical beta(E)"),
        ("rdm", cmd_rdm, "impurity density matrices, Boltzmann fits and Gibbs fraction"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("spectrum", help="spectrum file written by 'typicality spectrum'")
        p.set_defaults(func=func)
    p = sub.add_parser("sweep", parents=[common], help="run a (size, W_BB) grid from a manifest")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("report", parents=[common], help="figure-data CSVs (and PNGs) from a sweep tree")
    p.add_argument("results", help="sweep output directory")
    p.add_argument("--no-png", action="store_true", help="write the CSV tables only")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(code: str, message: str, exit_code: int) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return exit_code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    if args.threads is not None and args.threads < 1:
        return _fail("config", "--threads must be a positive integer", 2)
    if args.mem_budget is not None and not args.mem_budget > 0:
        return _fail("config", "--mem-budget must be positive", 2)
    try:
        with threadpool_limits(limits=args.threads) if args.threads else contextlib.nullcontext():
            summary = args.func(args)
    except TypicalityError as exc:
        return _fail(exc.code, str(exc), exc.exit_code)
    except MemoryError as exc:
        return _fail("capacity", str(exc) or "out of memory", 1)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    except Exception as exc:  # noqa: BLE001 - keep stderr machine-readable
        log.debug("unhandled error", exc_info=True)
        return _fail("internal", f"{type(exc).__name__}: {exc}", 1)
    print(json.dumps(summary, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
