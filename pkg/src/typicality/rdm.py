"""Reduction of eigenstates to the impurity and comparison with Gibbs states.

State vectors are reshaped to ``(m_sites, n_masks)`` (impurity-major basis
order), so tracing out the bath is a contraction over the mask axis.

The fit quality ``beta_err`` attached to every state is the *variance* of
the fitted inverse temperature (squared standard error of the slope of
``ln n_j`` against the orbital energies).  ``beta_stderr`` holds its root.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .eigen import SpectrumResult
from .model import ModelParams, enumerate_basis, impurity_hamiltonian

OCCUPATION_FLOOR = 1e-12
MIN_FIT_POINTS = 3
BATCH = 512


@dataclass(frozen=True)
class ImpurityRDM:
    matrix: np.ndarray
    state_index: int
    parent_energy: float

    @property
    def m_sites(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.sum(self.matrix * self.matrix))


@dataclass(frozen=True)
class NaturalOrbitals:
    occupations: np.ndarray
    orbitals: np.ndarray  # columns, same order as occupations
    orbital_energies: np.ndarray | None = None
    fluctuations: np.ndarray | None = None

    def reconstruct(self) -> np.ndarray:
        return (self.orbitals * self.occupations) @ self.orbitals.T


@dataclass(frozen=True)
class MeanFieldPotential:
    bath_density: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class BoltzmannFit:
    beta: float
    beta_var: float
    log_z: float
    n_points: int

    @property
    def beta_stderr(self) -> float:
        return float(np.sqrt(self.beta_var))

    @property
    def fittable(self) -> bool:
        return self.n_points >= MIN_FIT_POINTS


@dataclass(frozen=True)
class StateVerdict:
    alpha: int
    energy: float
    beta_fit: float
    beta_err: float
    gibbs_distance: float
    n_orbitals_used: int

    @property
    def fittable(self) -> bool:
        return self.n_orbitals_used >= MIN_FIT_POINTS and np.isfinite(self.beta_err)

    def is_canonical(self, threshold: float) -> bool:
        return self.fittable and self.beta_err <= threshold


# --- single-state operations ------------------------------------------------


def _state_matrix(spectrum: SpectrumResult, alpha: int) -> np.ndarray:
    m = spectrum.params.m_sites
    return spectrum.vector(alpha).reshape(m, -1)


def partial_trace_bath(spectrum: SpectrumResult, alpha: int) -> ImpurityRDM:
    psi = _state_matrix(spectrum, alpha)
    return ImpurityRDM(psi @ psi.T, alpha, float(spectrum.eigenvalues[alpha]))


def partial_trace_impurity(psi: np.ndarray, m_sites: int) -> np.ndarray:
    """Bath reduced density matrix of a pure state (used for Schmidt checks)."""
    x = np.asarray(psi).reshape(m_sites, -1)
    return x.T @ x


def natural_orbitals(d: ImpurityRDM | np.ndarray) -> NaturalOrbitals:
    mat = d.matrix if isinstance(d, ImpurityRDM) else np.asarray(d)
    occ, vecs = np.linalg.eigh(mat)
    return NaturalOrbitals(occ[::-1].copy(), vecs[:, ::-1].copy())


def mean_field_potential(spectrum: SpectrumResult, alpha: int, params: ModelParams | None = None) -> MeanFieldPotential:
    """Bath density <N_m> in the eigenstate and the potential W_IB * <N_m>."""
    params = params or spectrum.params
    psi = _state_matrix(spectrum, alpha)
    occ = enumerate_basis(params).occupations().astype(float)
    density = np.sum(psi**2, axis=0) @ occ
    return MeanFieldPotential(density, params.w_ib * density)


def one_body_hamiltonian(params: ModelParams, mf: MeanFieldPotential | np.ndarray | None = None) -> np.ndarray:
    h = impurity_hamiltonian(params)
    if mf is not None:
        values = mf.values if isinstance(mf, MeanFieldPotential) else np.asarray(mf)
        h = h + np.diag(values)
    return h


def orbital_energies(no: NaturalOrbitals, mf, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Expectation and spread of ``H_I + W_MF`` in each natural orbital."""
    h = one_body_hamiltonian(params, mf)
    hv = h @ no.orbitals
    mean = np.einsum("ij,ij->j", no.orbitals, hv)
    # spread as the residual norm ||(h - mean) v||, stable where the variance cancels
    return mean, np.linalg.norm(hv - no.orbitals * mean, axis=0)


def _weighted_line(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Row-wise weighted least-squares line; returns slope, intercept, slope variance, n."""
    n = np.count_nonzero(w > 0, axis=-1)
    sw = w.sum(axis=-1)
    safe = np.where(sw > 0, sw, 1.0)
    xm = (w * x).sum(axis=-1) / safe
    ym = (w * y).sum(axis=-1) / safe
    dx = x - xm[..., None]
    sxx = (w * dx**2).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = (w * dx * (y - ym[..., None])).sum(axis=-1) / sxx
        resid = y - ym[..., None] - slope[..., None] * dx
        s2 = (w * resid**2).sum(axis=-1) / (n - 2)
        var = s2 / sxx
    bad = (n < MIN_FIT_POINTS) | ~(sxx > 0)
    slope = np.where(bad, np.nan, slope)
    var = np.where(bad, np.nan, var)
    return slope, ym - slope * xm, var, n


def fit_boltzmann(occupations, energies, floor: float = OCCUPATION_FLOOR) -> BoltzmannFit:
    """Fit ``n_j = exp(-beta * eps_j) / Z`` by weighted regression of ``ln n_j``.

    Points are weighted by ``n_j**2``; occupations below ``floor`` are dropped.
    """
    n = np.asarray(occupations, dtype=float)
    x = np.asarray(energies, dtype=float)
    use = n > max(floor, OCCUPATION_FLOOR)
    w = np.where(use, n**2, 0.0)
    y = np.log(np.where(use, n, 1.0))
    slope, intercept, var, count = _weighted_line(x, y, w)
    return BoltzmannFit(-float(slope), float(var), -float(intercept), int(count))


def gibbs_state(params: ModelParams, mf, beta: float) -> np.ndarray:
    """Normalised ``exp(-beta (H_I + W_MF))`` by spectral decomposition."""
    h = one_body_hamiltonian(params, mf)
    eps, u = np.linalg.eigh(h)
    x = -beta * eps
    p = np.exp(x - logsumexp(x))
    return (u * p) @ u.T


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Trace-class norm of ``a - b`` for symmetric matrices."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def site_correlation(d: ImpurityRDM | np.ndarray, delta_m: int) -> float:
    mat = d.matrix if isinstance(d, ImpurityRDM) else np.asarray(d)
    m = mat.shape[0]
    if not 0 <= delta_m <= m - 1:
        raise ValueError(f"delta_m={delta_m} outside [0, {m - 1}]")
    return float(np.trace(mat, offset=delta_m))


def site_correlations(d) -> np.ndarray:
    mat = d.matrix if isinstance(d, ImpurityRDM) else np.asarray(d)
    return np.array([site_correlation(mat, k) for k in range(mat.shape[0])])


def analyze_state(spectrum: SpectrumResult, alpha: int, floor: float = OCCUPATION_FLOOR) -> dict:
    """Everything known about one state; used for per-state dumps."""
    params = spectrum.params
    d = partial_trace_bath(spectrum, alpha)
    no = natural_orbitals(d)
    mf = mean_field_potential(spectrum, alpha, params)
    eps, deps = orbital_energies(no, mf, params)
    fit = fit_boltzmann(no.occupations, eps, floor)
    gibbs = gibbs_state(params, mf, fit.beta) if fit.fittable else None
    return {
        "rdm": d,
        "orbitals": NaturalOrbitals(no.occupations, no.orbitals, eps, deps),
        "mean_field": mf,
        "fit": fit,
        "gibbs": gibbs,
        "gibbs_distance": trace_distance(d.matrix, gibbs) if gibbs is not None else float("nan"),
        "correlations": site_correlations(d),
        "gibbs_correlations": site_correlations(gibbs) if gibbs is not None else None,
    }


# --- batch analysis ---------------------------------------------------------


@dataclass(frozen=True)
class StateBatch:
    """Per-state results for a set of eigenstates, sorted by ``alpha``."""

    alpha: np.ndarray
    energy: np.ndarray
    beta_fit: np.ndarray
    beta_err: np.ndarray
    gibbs_distance: np.ndarray
    n_orbitals_used: np.ndarray
    max_trace_defect: float
    min_rdm_eigenvalue: float
    max_asymmetry: float
    max_density_defect: float

    def __len__(self) -> int:
        return len(self.alpha)

    @property
    def fittable(self) -> np.ndarray:
        return (self.n_orbitals_used >= MIN_FIT_POINTS) & np.isfinite(self.beta_err)

    def canonical(self, threshold: float) -> np.ndarray:
        return self.fittable & (np.nan_to_num(self.beta_err, nan=np.inf) <= threshold)

    def verdicts(self) -> list[StateVerdict]:
        return [
            StateVerdict(int(a), float(e), float(b), float(db), float(dd), int(n))
            for a, e, b, db, dd, n in zip(
                self.alpha, self.energy, self.beta_fit, self.beta_err, self.gibbs_distance, self.n_orbitals_used
            )
        ]

    def subset(self, mask: np.ndarray) -> "StateBatch":
        return StateBatch(
            self.alpha[mask],
            self.energy[mask],
            self.beta_fit[mask],
            self.beta_err[mask],
            self.gibbs_distance[mask],
            self.n_orbitals_used[mask],
            self.max_trace_defect,
            self.min_rdm_eigenvalue,
            self.max_asymmetry,
            self.max_density_defect,
        )


def analyze_states(
    spectrum: SpectrumResult,
    alphas: np.ndarray | None = None,
    floor: float = OCCUPATION_FLOOR,
    batch: int = BATCH,
) -> StateBatch:
    """Boltzmann fit and Gibbs distance for many eigenstates at once."""
    params = spectrum.params
    m = params.m_sites
    vecs = spectrum.eigenvectors
    if vecs is None:
        raise ValueError("spectrum has no eigenvectors")
    alphas = np.arange(spectrum.dimension) if alphas is None else np.sort(np.asarray(alphas, dtype=int))
    occ = enumerate_basis(params).occupations().astype(float)
    h_imp = impurity_hamiltonian(params)
    eye = np.eye(m)
    thr = max(floor, OCCUPATION_FLOOR)

    out = {k: [] for k in ("beta", "var", "dist", "n")}
    trace_def = asym = dens_def = 0.0
    min_eig = np.inf
    for start in range(0, len(alphas), batch):
        idx = alphas[start : start + batch]
        psi = vecs[:, idx].T.reshape(len(idx), m, -1)
        d = psi @ psi.transpose(0, 2, 1)
        trace_def = max(trace_def, float(np.max(np.abs(np.trace(d, axis1=1, axis2=2) - 1.0))))
        asym = max(asym, float(np.max(np.abs(d - d.transpose(0, 2, 1)))))
        d = 0.5 * (d + d.transpose(0, 2, 1))

        occupations, orbitals = np.linalg.eigh(d)
        min_eig = min(min_eig, float(occupations.min()))
        occupations, orbitals = occupations[:, ::-1], orbitals[:, :, ::-1]

        density = np.einsum("amb,bk->ak", psi**2, occ)
        dens_def = max(dens_def, float(np.max(np.abs(density.sum(axis=1) - params.n_bath))))
        h = h_imp[None] + (params.w_ib * density)[:, :, None] * eye[None]
        eps = np.einsum("aij,aik,akj->aj", orbitals, h, orbitals)

        use = occupations > thr
        w = np.where(use, occupations**2, 0.0)
        y = np.log(np.where(use, occupations, 1.0))
        slope, _, var, n = _weighted_line(eps, y, w)
        beta = -slope

        e1, u1 = np.linalg.eigh(h)
        x = -np.nan_to_num(beta)[:, None] * e1
        p = np.exp(x - logsumexp(x, axis=1, keepdims=True))
        gibbs = (u1 * p[:, None, :]) @ u1.transpose(0, 2, 1)
        dist = np.abs(np.linalg.eigvalsh(d - gibbs)).sum(axis=1)
        dist = np.where(np.isfinite(beta), dist, np.nan)

        out["beta"].append(beta)
        out["var"].append(var)
        out["dist"].append(dist)
        out["n"].append(n)

    cat = {k: np.concatenate(v) if v else np.empty(0) for k, v in out.items()}
    return StateBatch(
        alpha=alphas,
        energy=spectrum.eigenvalues[alphas],
        beta_fit=cat["beta"],
        beta_err=cat["var"],
        gibbs_distance=cat["dist"],
        n_orbitals_used=cat["n"].astype(int),
        max_trace_defect=trace_def,
        min_rdm_eigenvalue=float(min_eig) if np.isfinite(min_eig) else float("nan"),
        max_asymmetry=asym,
        max_density_defect=dens_def,
    )
