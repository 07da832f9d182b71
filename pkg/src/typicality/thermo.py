"""Inverse temperature as a function of energy, microcanonical and canonical."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import DomainError
from .spectral import SmoothStaircase

BETA_BRACKET = 50.0
BETA_LIMIT = 1e6


@dataclass(frozen=True)
class CanonicalPartition:
    beta: float
    log_z: float
    mean_energy: float
    energy_variance: float


@dataclass(frozen=True)
class BetaCurve:
    energies: np.ndarray
    beta_micro_total: np.ndarray
    beta_micro_bath: np.ndarray
    beta_canonical: np.ndarray

    def rows(self):
        return zip(self.energies, self.beta_micro_total, self.beta_micro_bath, self.beta_canonical)


def beta_microcanonical(smooth: SmoothStaircase, e, support: tuple[float, float] | None = None):
    """``d ln(Omega)/dE`` with Omega the derivative of the smoothed staircase.

    ``support`` is the energy range of the spectrum the staircase was fitted
    to; energies outside it, or where the smoothed DOS is not positive, raise
    :class:`DomainError`.
    """
    e_arr = np.asarray(e, dtype=float)
    if support is not None and np.any((e_arr < support[0]) | (e_arr > support[1])):
        raise DomainError(f"energy outside the fitted spectrum [{support[0]:.4g}, {support[1]:.4g}]")
    dos = smooth.dos(e_arr)
    if np.any(dos <= 0):
        raise DomainError("smoothed density of states is not positive at the requested energy")
    out = smooth.dos_derivative(e_arr) / dos
    return float(out) if out.ndim == 0 else out


def beta_microcanonical_or_nan(smooth: SmoothStaircase, e: np.ndarray, support=None) -> np.ndarray:
    """Vectorised variant returning NaN outside the domain instead of raising."""
    e = np.asarray(e, dtype=float)
    dos = smooth.dos(e)
    ok = dos > 0
    if support is not None:
        ok &= (e >= support[0]) & (e <= support[1])
    out = np.full(e.shape, np.nan)
    out[ok] = smooth.dos_derivative(e[ok]) / dos[ok]
    return out


def canonical_stats(eigenvalues: np.ndarray, beta: float) -> CanonicalPartition:
    e = np.asarray(eigenvalues, dtype=float)
    x = -beta * e
    log_z = float(logsumexp(x))
    w = np.exp(x - log_z)
    mean = float(np.dot(w, e))
    var = float(np.dot(w, (e - mean) ** 2))
    return CanonicalPartition(beta, log_z, mean, max(var, 0.0))


def _mean_energy(e: np.ndarray, beta: float) -> float:
    x = -beta * e
    x -= x.max()
    w = np.exp(x)
    return float(np.dot(w, e) / w.sum())


def solve_beta_canonical(eigenvalues: np.ndarray, e: float, tol: float = 1e-9) -> float:
    """Unique beta with canonical mean energy ``e`` (bracketed root search)."""
    ev = np.asarray(eigenvalues, dtype=float)
    lo_e, hi_e = float(ev.min()), float(ev.max())
    if not lo_e < e < hi_e:
        raise DomainError(f"energy {e} outside the open interval ({lo_e}, {hi_e})")
    f = lambda b: _mean_energy(ev, b) - e  # noqa: E731  decreasing in b
    lo, hi = -BETA_BRACKET, BETA_BRACKET
    while f(lo) < 0:
        lo *= 2
        if -lo > BETA_LIMIT:
            raise DomainError(f"no beta >= {-BETA_LIMIT} reaches energy {e}")
    while f(hi) > 0:
        hi *= 2
        if hi > BETA_LIMIT:
            raise DomainError(f"no beta <= {BETA_LIMIT} reaches energy {e}")
    beta = brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(beta)) > tol * (hi_e - lo_e):
        raise DomainError(f"root search for E={e} stalled at residual {f(beta):.3e}")
    return float(beta)


def beta_curve(
    eigenvalues: np.ndarray,
    smooth_total: SmoothStaircase,
    energies: np.ndarray,
    smooth_bath: SmoothStaircase | None = None,
    bath_support: tuple[float, float] | None = None,
) -> BetaCurve:
    """All three beta(E) estimates on an energy grid (NaN where undefined)."""
    ev = np.asarray(eigenvalues, dtype=float)
    grid = np.asarray(energies, dtype=float)
    support = (float(ev.min()), float(ev.max()))
    micro = beta_microcanonical_or_nan(smooth_total, grid, support)
    bath = (
        beta_microcanonical_or_nan(smooth_bath, grid, bath_support)
        if smooth_bath is not None
        else np.full(grid.shape, np.nan)
    )
    canon = np.full(grid.shape, np.nan)
    for i, e in enumerate(grid):
        if support[0] < e < support[1]:
            canon[i] = solve_beta_canonical(ev, e)
    return BetaCurve(grid, micro, bath, canon)
