"""Matplotlib rendering of the figure-data tables written by :mod:`typicality.report`."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.labelsize": 11,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
    "savefig.bbox": "tight",
    # fixed metadata keeps PNG bytes reproducible
    "savefig.dpi": 120,
}


def _figure():
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
    return fig, ax


def _save(fig, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _groups(table: dict, *keys):
    """Yield (key tuple, row mask) for each distinct combination of ``keys``."""
    cols = [table[k] for k in keys]
    combos = sorted(set(zip(*cols)))
    for combo in combos:
        mask = np.ones(len(cols[0]), dtype=bool)
        for col, value in zip(cols, combo):
            mask &= col == value
        yield combo, mask


def _colors(n):
    cmap = plt.get_cmap("viridis")
    return [cmap(x) for x in np.linspace(0.0, 0.9, max(n, 1))]


def plot_dos_staircase(t: dict, path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    stair = t["kind"] == "staircase"
    fit = t["kind"] == "staircase_fit"
    ax1.step(t["E"][stair], t["value"][stair], where="post", color="k", lw=0.8, label="N(E)")
    ax1.plot(t["E"][fit], t["value"][fit], "r--", lw=1.0, label="polynomial fit")
    ax1.set_xlabel("E")
    ax1.set_ylabel("N(E)")
    ax1.legend()
    dos = t["kind"] == "dos_normalized"
    combos = list(_groups({k: v[dos] for k, v in t.items()}, "w_bb"))
    for ((w,), _), color in zip(combos, _colors(len(combos))):
        m = dos & (t["w_bb"] == w)
        ax2.plot(t["E"][m], t["value"][m], color=color, label=f"$W_{{BB}}$={w:g}")
    ax2.set_xlabel("E")
    ax2.set_ylabel(r"$\Omega(E)$ (normalized)")
    ax2.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_spacing(t: dict, path: Path) -> Path:
    fig, ax = _figure()
    combos = list(_groups(t, "w_bb"))
    for ((w,), m), color in zip(combos, _colors(len(combos))):
        ax.plot(t["s_mid"][m], t["density"][m], color=color, lw=0.6, alpha=0.7, label=f"$W_{{BB}}$={w:g}")
        ax.plot(t["s_mid"][m], t["brody_fit"][m], color=color, lw=1.2, ls="--")
    first = combos[0][1]
    ax.plot(t["s_mid"][first], t["poisson"][first], "k:", label="Poisson")
    ax.plot(t["s_mid"][first], t["wigner_dyson"][first], "k-", lw=0.8, label="Wigner-Dyson")
    ax.set_xlim(0, 4)
    ax.set_xlabel("s")
    ax.set_ylabel("P(s)")
    ax.legend()
    return _save(fig, path)


def plot_gamma_vs_wbb(t: dict, path: Path, title: str = "") -> Path:
    fig, ax = _figure()
    combos = list(_groups(t, "m_sites", "n_bath"))
    for ((m, n), mask), color in zip(combos, _colors(len(combos))):
        order = np.argsort(t["w_bb"][mask])
        w = t["w_bb"][mask][order]
        ax.errorbar(w, t["gamma"][mask][order], yerr=t["gamma_err"][mask][order], fmt="o", color=color,
                    label=f"$M_s$={m:g}, $N_B$={n:g}")
        if "tanh_fit" in t and np.isfinite(t["tanh_fit"][mask]).any():
            ax.plot(w, t["tanh_fit"][mask][order], color=color, lw=1.0)
    ax.set_xlabel("$W_{BB}$")
    ax.set_ylabel(r"Brody parameter $\gamma$")
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_gap_ratio(t: dict, path: Path) -> Path:
    fig, ax = _figure()
    combos = list(_groups(t, "w_bb"))
    for ((w,), m), color in zip(combos, _colors(len(combos))):
        ax.step(t["r_mid"][m], t["density"][m], where="mid", color=color, lw=0.9, label=f"$W_{{BB}}$={w:g}")
    first = combos[0][1]
    ax.plot(t["r_mid"][first], t["W_goe"][first], "k-", label="GOE")
    ax.plot(t["r_mid"][first], t["W_poisson"][first], "k:", label="Poisson")
    ax.set_xlabel(r"$\tilde r$")
    ax.set_ylabel(r"$W(\tilde r)$")
    ax.legend()
    return _save(fig, path)


def plot_beta(t: dict, path: Path) -> Path:
    fig, ax = _figure()
    ax.plot(t["E"], t["beta_micro_total"], "k-", label="microcanonical (total DOS)")
    ax.plot(t["E"], t["beta_micro_bath"], "b-", lw=0.8, label="microcanonical (bath DOS)")
    ax.plot(t["E"], t["beta_canonical"], "r--", label="canonical")
    ax.axhline(0, color="0.6", lw=0.5)
    ax.set_xlabel("E")
    ax.set_ylabel(r"$\beta(E)$")
    ax.legend()
    return _save(fig, path)


def plot_beta_states(t: dict, path: Path, color_cap: float = 0.01) -> Path:
    combos = list(_groups(t, "w_bb"))
    fig, axes = plt.subplots(1, len(combos), figsize=(4.5 * len(combos), 3.6), squeeze=False)
    for ax, ((w,), m) in zip(axes[0], combos):
        err = np.nan_to_num(t["beta_err"][m], nan=color_cap)
        sc = ax.scatter(t["E_alpha"][m], t["beta_fit"][m], c=np.minimum(err, color_cap), s=2, cmap="coolwarm",
                        vmin=0, vmax=color_cap)
        ax.set_title(f"$W_{{BB}}$={w:g}")
        ax.set_xlabel(r"$E_\alpha$")
        ax.set_ylabel(r"$\beta_\alpha$")
        finite = np.isfinite(t["beta_fit"][m])
        if finite.any():
            lo, hi = np.percentile(t["beta_fit"][m][finite], [1, 99])
            ax.set_ylim(lo - 0.2 * abs(hi - lo), hi + 0.2 * abs(hi - lo))
        fig.colorbar(sc, ax=ax, label=r"$\Delta\beta_\alpha$")
    fig.tight_layout()
    return _save(fig, path)


def plot_g_vs_gamma(t: dict, path: Path, fit_gamma0: float | None = None) -> Path:
    fig, ax = _figure()
    sc = ax.scatter(t["gamma"], t["G"], c=t["w_bb"], cmap="viridis", zorder=3)
    ax.errorbar(t["gamma"], t["G"], xerr=t["gamma_err"], yerr=t["G_err"], fmt="none", ecolor="0.5", zorder=2)
    grid = np.linspace(0, 1, 101)
    ax.plot(grid, grid, color="0.7", lw=0.8, label=r"$G=\gamma$")
    if fit_gamma0 is not None and np.isfinite(fit_gamma0):
        ax.plot(grid, np.tanh(grid / fit_gamma0) ** 2, "k-", lw=1.0, label=rf"$\tanh^2(\gamma/{fit_gamma0:.2f})$")
    ax.set_xlim(0, 1.05)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel(r"$\gamma$")
    ax.set_ylabel("G")
    fig.colorbar(sc, ax=ax, label="$W_{BB}$")
    ax.legend(loc="upper left")
    return _save(fig, path)
