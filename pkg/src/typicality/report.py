"""Figure-data bundle built from a sweep result tree.

Every table is written as ``<name>.csv`` (header comment naming the figure
and schema version) and rendered to ``<name>.png`` next to it.

=============================  ======  ==========================================
file                           figure  content
=============================  ======  ==========================================
fig1_dos_staircase             1       staircase, its polynomial fit, binned DOS
fig2_spacing                   2a,b    spacing density with Brody fit
fig2c_gamma_vs_wbb             2c      Brody parameter vs W_BB with tanh fit
fig3_gap_ratio                 3       restricted gap-ratio density
fig4_beta                      4       beta(E), microcanonical and canonical
fig6_beta_states               6       fitted beta per eigenstate with variance
G_vs_gamma                     7       Gibbs fraction vs Brody parameter
fig8_gamma_vs_size             8       Brody parameter vs W_BB for every size
fig9_G_vs_gamma_universal      9       pooled G(gamma) with tanh^2 fit
=============================  ======  ==========================================
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import plotting, spectral
from .errors import TypicalityError
from .experiment import PointResult, load_sweep, read_csv, write_csv

REPORT_SCHEMA = 1

FIGURE_FILES = (
    "fig1_dos_staircase",
    "fig2_spacing",
    "fig2c_gamma_vs_wbb",
    "fig3_gap_ratio",
    "fig4_beta",
    "fig6_beta_states",
    "G_vs_gamma",
    "fig8_gamma_vs_size",
    "fig9_G_vs_gamma_universal",
)


class ReportError(TypicalityError):
    code = "report"


def _comment(figure: str, text: str) -> str:
    return f"figure {figure}: {text}\nschema {REPORT_SCHEMA}"


def _size(p: PointResult) -> tuple[int, int]:
    return p.params.m_sites, p.params.n_bath


def _write(out: Path, name: str, rows: list[dict], comment: str, header: list[str]) -> dict:
    write_csv(out / f"{name}.csv", header, ([r[h] for h in header] for r in rows), comment)
    return {h: np.array([r[h] for r in rows]) for h in header}


def build_report(result_dir: Path, out_dir: Path, render: bool = True) -> dict[str, Path]:
    """Write all figure tables (and PNGs when ``render``) for a sweep tree."""
    result_dir, out_dir = Path(result_dir), Path(out_dir)
    try:
        points, summary = load_sweep(result_dir)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ReportError(f"cannot read sweep results in {result_dir}: {exc}") from exc
    if not points:
        raise ReportError(f"no sweep points under {result_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    largest = max({_size(p) for p in points}, key=lambda s: (s[0], s[1]))
    main = sorted((p for p in points if _size(p) == largest), key=lambda p: p.params.w_bb)
    strongest = main[-1]
    pdir = lambda p: result_dir / "points" / p.name  # noqa: E731
    sizes_tag = {"m_sites": largest[0], "n_bath": largest[1]}
    written: dict[str, Path] = {}

    def emit(name, rows, comment, header, plot=None, **kw):
        if not rows:
            raise ReportError(f"no data for {name}")
        table = _write(out_dir, name, rows, comment, header)
        written[name] = out_dir / f"{name}.csv"
        if render and plot is not None:
            written[f"{name}.png"] = plot(table, out_dir / f"{name}.png", **kw)

    # figure 1
    rows = []
    st = read_csv(pdir(strongest) / "staircase.csv")
    for e, n, fit in zip(st["E"], st["N"], st["N_smooth"]):
        rows.append({**sizes_tag, "w_bb": strongest.params.w_bb, "kind": "staircase", "E": e, "value": n})
    for e, fit in zip(st["E"], st["N_smooth"]):
        rows.append({**sizes_tag, "w_bb": strongest.params.w_bb, "kind": "staircase_fit", "E": e, "value": fit})
    for p in main:
        dos = read_csv(pdir(p) / "dos.csv")
        for e, v in zip(dos["E_mid"], dos["normalized"]):
            rows.append({**sizes_tag, "w_bb": p.params.w_bb, "kind": "dos_normalized", "E": e, "value": v})
    emit("fig1_dos_staircase", rows, _comment("1", "staircase N(E), fitted smooth staircase, normalized binned DOS"),
         ["kind", "m_sites", "n_bath", "w_bb", "E", "value"], plotting.plot_dos_staircase)

    # figure 2 (a, b)
    rows = []
    for p in main:
        h = read_csv(pdir(p) / "spacing.csv")
        fit = spectral.brody_pdf(h["s_mid"], p.gamma)
        for s, d, f, po, wd in zip(h["s_mid"], h["density"], fit, spectral.poisson_pdf(h["s_mid"]),
                                   spectral.wigner_dyson_pdf(h["s_mid"])):
            rows.append({**sizes_tag, "w_bb": p.params.w_bb, "s_mid": s, "density": d, "brody_fit": f,
                         "poisson": po, "wigner_dyson": wd})
    emit("fig2_spacing", rows, _comment("2a/2b", "nearest-neighbour spacing density and Brody fit"),
         ["m_sites", "n_bath", "w_bb", "s_mid", "density", "brody_fit", "poisson", "wigner_dyson"],
         plotting.plot_spacing)

    # figure 2c and 8 share the gamma(W_BB) rows
    tanh = summary.get("gamma_tanh", {})

    def gamma_rows(pts):
        out = []
        for p in sorted(pts, key=lambda q: (q.params.m_sites, q.params.w_bb)):
            fit = tanh.get(f"M{p.params.m_sites}_N{p.params.n_bath}", {})
            curve = fit["gamma0"] * np.tanh(p.params.w_bb / fit["w_bb0"]) if "gamma0" in fit else float("nan")
            out.append({"m_sites": p.params.m_sites, "n_bath": p.params.n_bath, "w_bb": p.params.w_bb,
                        "gamma": p.gamma, "gamma_err": p.gamma_err, "tanh_fit": curve})
        return out

    header = ["m_sites", "n_bath", "w_bb", "gamma", "gamma_err", "tanh_fit"]
    emit("fig2c_gamma_vs_wbb", gamma_rows(main),
         _comment("2c", "Brody parameter vs W_BB; tanh_fit = gamma0*tanh(W_BB/W0)"), header,
         plotting.plot_gamma_vs_wbb)
    emit("fig8_gamma_vs_size", gamma_rows(points), _comment("8", "Brody parameter vs W_BB for each system size"),
         header, plotting.plot_gamma_vs_wbb)

    # figure 3
    rows = []
    for p in main:
        g = read_csv(pdir(p) / "gap_ratio.csv")
        for r, d, wg, wp in zip(g["r_mid"], g["density"], spectral.gap_ratio_reference(g["r_mid"], "GOE"),
                                spectral.gap_ratio_reference(g["r_mid"], "Poisson")):
            rows.append({**sizes_tag, "w_bb": p.params.w_bb, "r_mid": r, "density": d, "W_goe": wg, "W_poisson": wp})
    emit("fig3_gap_ratio", rows, _comment("3", "restricted gap-ratio density with GOE and Poisson references"),
         ["m_sites", "n_bath", "w_bb", "r_mid", "density", "W_goe", "W_poisson"], plotting.plot_gap_ratio)

    # figure 4
    b = read_csv(pdir(strongest) / "beta.csv")
    rows = [{**sizes_tag, "w_bb": strongest.params.w_bb, "E": e, "beta_micro_total": t, "beta_micro_bath": bb,
             "beta_canonical": c}
            for e, t, bb, c in zip(b["E"], b["beta_micro_total"], b["beta_micro_bath"], b["beta_canonical"])]
    emit("fig4_beta", rows, _comment("4", "beta(E) from the smoothed DOS and from the canonical relation"),
         ["m_sites", "n_bath", "w_bb", "E", "beta_micro_total", "beta_micro_bath", "beta_canonical"],
         plotting.plot_beta)

    # figure 6: the strongest coupling and the point closest to W_BB = 0.1
    picks = [strongest]
    weaker = [p for p in main if p is not strongest]
    if weaker:
        picks.insert(0, min(weaker, key=lambda p: abs(p.params.w_bb - 0.1)))
    rows = []
    for p in picks:
        v = read_csv(pdir(p) / "verdicts.csv")
        win = spectral.Window(p.window["lo"], p.window["hi"])
        inside = win.mask(v["E_alpha"]).astype(int)
        for a, e, bf, be, w in zip(v["alpha"], v["E_alpha"], v["beta_fit"], v["beta_err"], inside):
            rows.append({**sizes_tag, "w_bb": p.params.w_bb, "alpha": int(a), "E_alpha": e, "beta_fit": bf,
                         "beta_err": be, "in_window": int(w)})
    emit("fig6_beta_states", rows, _comment("6", "fitted beta per eigenstate; beta_err is the fit variance"),
         ["m_sites", "n_bath", "w_bb", "alpha", "E_alpha", "beta_fit", "beta_err", "in_window"],
         plotting.plot_beta_states)

    # figure 7 (largest size) and 9 (pooled)
    def g_rows(pts):
        return [{"m_sites": p.params.m_sites, "n_bath": p.params.n_bath, "w_bb": p.params.w_bb, "gamma": p.gamma,
                 "gamma_err": p.gamma_err, "G": p.G, "G_err": p.G_err}
                for p in sorted(pts, key=lambda q: (q.params.m_sites, q.params.w_bb))]

    g_header = ["m_sites", "n_bath", "w_bb", "gamma", "gamma_err", "G", "G_err"]
    emit("G_vs_gamma", g_rows(main), _comment("7", "Gibbs fraction G vs Brody parameter (mean/std over thresholds)"),
         g_header, plotting.plot_g_vs_gamma)
    g0 = summary.get("G_tanh2", {}).get("gamma0_prime", float("nan"))
    rows = g_rows(points)
    for r in rows:
        r["tanh2_fit"] = float(np.tanh(r["gamma"] / g0) ** 2) if np.isfinite(g0) else float("nan")
    emit("fig9_G_vs_gamma_universal", rows,
         _comment("9", f"pooled G(gamma) across sizes; tanh^2 fit gamma0'={g0!r}"), g_header + ["tanh2_fit"],
         plotting.plot_g_vs_gamma, fit_gamma0=g0)
    return written
