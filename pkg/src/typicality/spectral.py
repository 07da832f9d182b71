"""Level statistics: staircase, DOS, unfolding, spacing distributions, gap ratios."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import OptimizeWarning, curve_fit
from scipy.special import gamma as gamma_fn

from .errors import FitError, UnfoldingError

log = logging.getLogger(__name__)

STAIRCASE_DEGREE = 10
DOS_BIN_WIDTH = 0.4
SPACING_BIN_WIDTH = 0.01
RATIO_BIN_WIDTH = 0.02
BRODY_BOUNDS = (0.0, 1.05)
BRODY_STARTS = (0.5, 0.1, 0.9)
MEAN_R_POISSON = 2.0 * math.log(2.0) - 1.0
MEAN_R_GOE = 0.5307


# --- staircase and density of states ---------------------------------------


def staircase(eigenvalues: np.ndarray, e) -> np.ndarray | int:
    """Number of eigenvalues ``<= e`` (step function with Theta(0) = 1)."""
    out = np.searchsorted(np.asarray(eigenvalues), e, side="right")
    return int(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DOSCurve:
    edges: np.ndarray
    counts: np.ndarray
    bin_width: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self) -> np.ndarray:
        return self.counts / self.bin_width

    @property
    def normalized(self) -> np.ndarray:
        return self.counts / (self.counts.sum() * self.bin_width)

    def peak(self) -> float:
        return float(self.centers[np.argmax(self.counts)])

    def fwhm(self) -> float:
        """Full width at half maximum, linearly interpolated between bin centres."""
        x, y = self.centers, self.counts.astype(float)
        k = int(np.argmax(y))
        half = 0.5 * y[k]
        left = k
        while left > 0 and y[left - 1] >= half:
            left -= 1
        right = k
        while right < len(y) - 1 and y[right + 1] >= half:
            right += 1

        def cross(i_in, i_out):
            if i_out < 0 or i_out >= len(y):
                return x[i_in] + (0.5 * self.bin_width if i_out > i_in else -0.5 * self.bin_width)
            t = (y[i_in] - half) / (y[i_in] - y[i_out])
            return x[i_in] + t * (x[i_out] - x[i_in])

        return float(cross(right, right + 1) - cross(left, left - 1))


def binned_dos(eigenvalues: np.ndarray, bin_width: float = DOS_BIN_WIDTH) -> DOSCurve:
    """Histogram of the spectrum with bins of fixed width starting at ``E_min``."""
    e = np.asarray(eigenvalues, dtype=float)
    if e.size == 0:
        raise ValueError("empty spectrum")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    lo, hi = float(e.min()), float(e.max())
    nbins = max(1, math.ceil((hi - lo) / bin_width - 1e-9))
    edges = lo + bin_width * np.arange(nbins + 1)
    edges[-1] = max(edges[-1], hi)
    counts, _ = np.histogram(e, bins=edges)
    return DOSCurve(edges, counts, bin_width)


@dataclass(frozen=True)
class Window:
    lo: float
    hi: float
    rule: str = "explicit"

    def mask(self, e: np.ndarray) -> np.ndarray:
        return (e >= self.lo) & (e <= self.hi)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "rule": self.rule}


def dos_window(eigenvalues: np.ndarray, bin_width: float = DOS_BIN_WIDTH) -> Window:
    """``[E_min, E_peak + FWHM/2]`` of the binned density of states."""
    dos = binned_dos(eigenvalues, bin_width)
    return Window(float(np.min(eigenvalues)), dos.peak() + 0.5 * dos.fwhm(), "dos")


def resolve_window(eigenvalues: np.ndarray, rule="dos", bin_width: float = DOS_BIN_WIDTH) -> Window:
    """Window from a rule: ``"dos"``, ``"full"``, a ``(lo, hi)`` pair or a :class:`Window`."""
    if isinstance(rule, Window):
        return rule
    if rule == "dos":
        return dos_window(eigenvalues, bin_width)
    if rule == "full":
        return Window(float(np.min(eigenvalues)), float(np.max(eigenvalues)), "full")
    if isinstance(rule, Sequence) and not isinstance(rule, str) and len(rule) == 2:
        return Window(float(rule[0]), float(rule[1]))
    raise ValueError(f"unknown window rule {rule!r}")


# --- unfolding --------------------------------------------------------------


class SmoothStaircase:
    """Polynomial fit of the staircase; the energy axis is mapped onto [-1, 1]."""

    def __init__(self, poly: Polynomial):
        self.poly = poly
        self._d1 = poly.deriv(1)
        self._d2 = poly.deriv(2)

    @classmethod
    def fit(cls, eigenvalues: np.ndarray, degree: int = STAIRCASE_DEGREE) -> "SmoothStaircase":
        e = np.asarray(eigenvalues, dtype=float)
        ranks = np.arange(1, e.size + 1, dtype=float)
        return cls(Polynomial.fit(e, ranks, degree))

    @property
    def coefficients(self) -> np.ndarray:
        return self.poly.coef

    @property
    def domain(self) -> np.ndarray:
        return self.poly.domain

    def __call__(self, e):
        return self.poly(e)

    def dos(self, e):
        return self._d1(e)

    def dos_derivative(self, e):
        return self._d2(e)

    def min_slope(self, lo: float, hi: float, points: int = 4001) -> float:
        grid = np.linspace(lo, hi, points)
        return float(np.min(self._d1(grid)))


@dataclass(frozen=True)
class UnfoldedSpectrum:
    raw: np.ndarray
    unfolded: np.ndarray
    smooth: SmoothStaircase
    window: Window

    @property
    def smooth_staircase(self) -> np.ndarray:
        return self.smooth.coefficients

    def spacings(self) -> np.ndarray:
        return np.diff(self.unfolded)


def unfold(
    eigenvalues: np.ndarray,
    window: Window | None = None,
    degree: int = STAIRCASE_DEGREE,
    min_levels: int = 500,
) -> UnfoldedSpectrum:
    """Unfold through a degree-``degree`` fit of the full staircase.

    The polynomial is fitted to every eigenvalue; unfolded levels
    ``e_a = Nbar(E_a)`` are returned for the levels inside ``window``.
    Raises :class:`UnfoldingError` if ``Nbar`` decreases anywhere in the window.
    """
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    if window is None:
        window = Window(float(e[0]), float(e[-1]), "full")
    inside = e[window.mask(e)]
    if inside.size < min_levels:
        raise UnfoldingError(f"only {inside.size} levels in window, need >= {min_levels}")
    smooth = SmoothStaircase.fit(e, degree)
    slope = smooth.min_slope(inside[0], inside[-1])
    if slope < 0:
        raise UnfoldingError(
            f"smoothed staircase is not monotone on [{inside[0]:.4g}, {inside[-1]:.4g}] "
            f"(min slope {slope:.3g}); shrink the window"
        )
    return UnfoldedSpectrum(inside, smooth(inside), smooth, window)


def monotone_window(
    eigenvalues: np.ndarray, window: Window, degree: int = STAIRCASE_DEGREE, points: int = 4001
) -> Window:
    """Shrink ``window`` to the stretch where the smoothed staircase increases.

    Of the sub-intervals with positive fitted DOS, the one holding the most
    levels is kept and the window is clipped to its first and last level.
    ``window`` is returned unchanged when the fit is monotone throughout.
    """
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    inside = e[window.mask(e)]
    if inside.size < 2:
        return window
    smooth = SmoothStaircase.fit(e, degree)
    grid = np.linspace(inside[0], inside[-1], points)
    positive = smooth.dos(grid) > 0
    if positive.all():
        return window
    # runs of consecutive positive grid points -> [start, stop) index pairs
    edges = np.flatnonzero(np.diff(np.concatenate([[0], positive.astype(np.int8), [0]])))
    runs = edges.reshape(-1, 2)
    if runs.size == 0:
        raise UnfoldingError(f"smoothed staircase decreases across all of [{inside[0]:.4g}, {inside[-1]:.4g}]")
    counts = [np.count_nonzero((inside >= grid[a]) & (inside <= grid[b - 1])) for a, b in runs]
    a, b = runs[int(np.argmax(counts))]
    kept = inside[(inside >= grid[a]) & (inside <= grid[b - 1])]
    return Window(float(kept[0]), float(kept[-1]), f"{window.rule}+monotone")


# --- spacing distributions --------------------------------------------------


@dataclass(frozen=True)
class SpacingHistogram:
    bin_width: float
    edges: np.ndarray
    counts: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def normalized_density(self) -> np.ndarray:
        return self.counts / (self.n_samples * self.bin_width)

    def cumulative(self) -> np.ndarray:
        """Empirical integral of P(s) evaluated at the right bin edges."""
        return np.cumsum(self.counts) / self.n_samples


def histogram_spacings(spacings: np.ndarray, bin_width: float = SPACING_BIN_WIDTH) -> SpacingHistogram:
    s = np.asarray(spacings, dtype=float)
    if s.size == 0:
        raise ValueError("no spacings")
    if np.any(s < 0):
        raise ValueError("negative spacing; levels must be sorted")
    nbins = int(math.floor(float(s.max()) / bin_width)) + 1
    edges = bin_width * np.arange(nbins + 1)
    counts, _ = np.histogram(s, bins=edges)
    return SpacingHistogram(bin_width, edges, counts)


def spacing_histogram(u: UnfoldedSpectrum, bin_width: float = SPACING_BIN_WIDTH) -> SpacingHistogram:
    if u.unfolded.size < 2:
        raise ValueError("need at least two levels for a spacing")
    return histogram_spacings(u.spacings(), bin_width)


def brody_b(gamma: float) -> float:
    return gamma_fn((gamma + 2.0) / (gamma + 1.0)) ** (gamma + 1.0)


def brody_pdf(s, gamma: float):
    s = np.asarray(s, dtype=float)
    b = brody_b(gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (gamma + 1.0) * b * s**gamma * np.exp(-b * s ** (gamma + 1.0))
    return out


def brody_cdf(s, gamma: float):
    s = np.asarray(s, dtype=float)
    return 1.0 - np.exp(-brody_b(gamma) * s ** (gamma + 1.0))


def poisson_pdf(s):
    return np.exp(-np.asarray(s, dtype=float))


def wigner_dyson_pdf(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s**2)


def sample_brody(gamma: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF samples of the Brody distribution."""
    u = rng.random(size)
    return (-np.log1p(-u) / brody_b(gamma)) ** (1.0 / (gamma + 1.0))


@dataclass(frozen=True)
class BrodyFitResult:
    gamma: float
    gamma_err: float
    gamma_pdf: float
    gamma_cdf: float

    @property
    def method_values(self) -> tuple[float, float]:
        return self.gamma_pdf, self.gamma_cdf


def _fit_one(model, x, y, label: str) -> float:
    failures = []
    for g0 in BRODY_STARTS:
        try:
            with warnings.catch_warnings():
                # covariance is unused; a fit pinned to a bound is still valid
                warnings.simplefilter("ignore", OptimizeWarning)
                popt, _ = curve_fit(model, x, y, p0=[g0], bounds=BRODY_BOUNDS)
        except (RuntimeError, ValueError) as exc:
            failures.append(f"gamma0={g0}: {exc}")
            continue
        if np.isfinite(popt[0]):
            return float(popt[0])
        failures.append(f"gamma0={g0}: non-finite estimate")
    raise FitError(f"Brody {label} fit did not converge; tried " + "; ".join(failures))


def fit_brody(h: SpacingHistogram) -> BrodyFitResult:
    """Brody parameter from the density and from its integral.

    The reported value is the mean of the two fits and the error their
    sample standard deviation.
    """
    nonzero = h.counts > 0
    g_pdf = _fit_one(brody_pdf, h.centers[nonzero], h.normalized_density[nonzero], "pdf")
    last = int(np.nonzero(nonzero)[0][-1]) + 1
    g_cdf = _fit_one(brody_cdf, h.edges[1 : last + 1], h.cumulative()[:last], "cdf")
    pair = np.array([g_pdf, g_cdf])
    return BrodyFitResult(float(pair.mean()), float(pair.std(ddof=1)), g_pdf, g_cdf)


# --- restricted gap ratios --------------------------------------------------


@dataclass(frozen=True)
class GapRatioStats:
    ratios: np.ndarray
    mean_r: float
    edges: np.ndarray
    density: np.ndarray
    n_degenerate: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def restricted_gap_ratios(
    eigenvalues: np.ndarray, window: Window | None = None, bin_width: float = RATIO_BIN_WIDTH
) -> GapRatioStats:
    """``min(g, 1/g)`` with ``g`` the ratio of consecutive raw level gaps.

    Ratios touching an exactly zero gap are dropped and counted in
    ``n_degenerate``.
    """
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    if window is not None:
        e = e[window.mask(e)]
    if e.size < 3:
        raise ValueError(f"need at least three levels, got {e.size}")
    gaps = np.diff(e)
    upper, lower = gaps[1:], gaps[:-1]
    good = (upper > 0) & (lower > 0)
    r = np.minimum(upper[good], lower[good]) / np.maximum(upper[good], lower[good])
    nbins = int(round(1.0 / bin_width))
    edges = np.linspace(0.0, 1.0, nbins + 1)
    counts, _ = np.histogram(r, bins=edges)
    density = counts / (max(r.size, 1) * bin_width)
    mean = float(r.mean()) if r.size else float("nan")
    return GapRatioStats(r, mean, edges, density, int((~good).sum()))


def gap_ratio_reference(r, kind: str = "GOE"):
    """Reference densities of the restricted gap ratio on [0, 1]."""
    r = np.asarray(r, dtype=float)
    kind = kind.upper()
    if kind == "GOE":
        return 27.0 / 4.0 * (r + r**2) / (1.0 + r + r**2) ** 2.5
    if kind in ("P", "POISSON"):
        return 2.0 / (1.0 + r) ** 2
    raise ValueError(f"unknown reference {kind!r}")
