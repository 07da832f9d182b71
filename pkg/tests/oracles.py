"""Independent brute-force constructions used as test oracles.

Nothing here imports the package's Hamiltonian builder.  Bath particles are
treated in first quantization (positions, not bitmasks) and the fermionic
sector is obtained by projecting onto antisymmetric wavefunctions.
"""
from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg


def tilt(site: int, m: int, amplitude: float, exponent: int) -> float:
    return amplitude * (-0.5 + (site - 1) ** exponent / (m - 1) ** exponent)


def chain(m: int, hop: float, amplitude: float = 0.0, exponent: int = 2) -> np.ndarray:
    """One-particle open chain with tilt on the diagonal."""
    h = np.zeros((m, m))
    for j in range(m - 1):
        h[j, j + 1] = h[j + 1, j] = -hop
    for j in range(m):
        h[j, j] = tilt(j + 1, m, amplitude, exponent)
    return h


def first_quantized(m, n_bath, j_imp=1.0, j_bath=1.0, w_bb=1.0, w_ib=1.0, amplitude=0.01, exponent=2):
    """Impurity plus ``n_bath`` distinguishable bath particles, all positions.

    Returns ``(H, configs)`` where ``configs[k] = (impurity, x1, ..., xN)``
    with 0-based sites.  Two bath particles on the same site get no special
    treatment; the antisymmetric projection removes those states.
    """
    configs = list(itertools.product(range(m), repeat=n_bath + 1))
    index = {c: k for k, c in enumerate(configs)}
    h = np.zeros((len(configs), len(configs)))
    for k, c in enumerate(configs):
        imp, bath = c[0], c[1:]
        diag = tilt(imp + 1, m, amplitude, exponent)
        diag += sum(tilt(x + 1, m, amplitude, exponent) for x in bath)
        diag += w_ib * sum(x == imp for x in bath)
        diag += w_bb * sum(abs(a - b) == 1 for a, b in itertools.combinations(bath, 2))
        h[k, k] = diag
        for step in (-1, 1):
            if 0 <= imp + step < m:
                h[index[(imp + step, *bath)], k] -= j_imp
            for p in range(n_bath):
                if 0 <= bath[p] + step < m:
                    moved = list(bath)
                    moved[p] += step
                    h[index[(imp, *moved)], k] -= j_bath
    return h, configs


def antisymmetric_basis(m: int, n_bath: int, configs) -> tuple[np.ndarray, list]:
    """Columns: normalized antisymmetrized bath states (impurity site kept).

    Ordered by (impurity site, sorted bath positions), matching impurity-major
    order with ascending bath bitmasks.
    """
    index = {c: k for k, c in enumerate(configs)}
    labels = []
    cols = []
    for imp in range(m):
        for occ in itertools.combinations(range(m), n_bath):
            v = np.zeros(len(configs))
            for perm in itertools.permutations(range(n_bath)):
                sign = np.linalg.det(np.eye(n_bath)[list(perm)]) if n_bath else 1.0
                v[index[(imp, *(occ[p] for p in perm))]] += sign
            cols.append(v / np.linalg.norm(v))
            labels.append((imp, occ))
    # bitmask order: ascending sum of 2**site
    order = sorted(range(len(labels)), key=lambda i: (labels[i][0], sum(1 << s for s in labels[i][1])))
    return np.array(cols).T[:, order], [labels[i] for i in order]


def fermion_hamiltonian(m, n_bath, **couplings) -> np.ndarray:
    """Hamiltonian projected on the antisymmetric bath sector, canonical order."""
    h, configs = first_quantized(m, n_bath, **couplings)
    p, _ = antisymmetric_basis(m, n_bath, configs)
    return p.T @ h @ p


def impurity_rdm_loops(psi: np.ndarray, m: int, n_masks: int) -> np.ndarray:
    """Partial trace over the bath by explicit summation."""
    d = np.zeros((m, m))
    for i in range(m):
        for k in range(m):
            for b in range(n_masks):
                d[i, k] += psi[i * n_masks + b] * psi[k * n_masks + b]
    return d


def gibbs_expm(h_one_body: np.ndarray, beta: float) -> np.ndarray:
    rho = scipy.linalg.expm(-beta * h_one_body)
    return rho / np.trace(rho)


def trace_norm(a: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))
