"""Impurity embedded in a spin-polarized Fermi-Hubbard chain.

Basis states are pairs (impurity site, bath occupation bitmask).  The
canonical ordering is impurity-site major with the bath masks ascending as
integers inside each block, so the full-system index is

    index = (site - 1) * n_masks + rank(mask)

and a reshape ``(m_sites, n_masks)`` of any state vector exposes the
impurity as the leading axis.  Bit ``j - 1`` of a mask is set iff bath
site ``j`` is occupied (sites are labelled 1..M in the public API).

Hops only ever connect nearest neighbours on an open chain, so no
Jordan-Wigner string is crossed and every hopping amplitude is ``-J``.
"""
from __future__ import annotations

import hashlib
import itertools
import math
import struct
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, ConfigError, DimensionError

__all__ = [
    "ModelParams",
    "FockBasis",
    "BasisState",
    "SparseHamiltonian",
    "enumerate_basis",
    "external_potential",
    "build_hamiltonian",
    "build_bath_hamiltonian",
    "impurity_hamiltonian",
    "apply_hamiltonian",
]


@dataclass(frozen=True)
class ModelParams:
    """Couplings and lattice size.  Energies are in units of J (J = k_B = 1)."""

    m_sites: int
    n_bath: int
    j_imp: float = 1.0
    j_bath: float = 1.0
    w_bb: float = 1.0
    w_ib: float = 1.0
    tilt_exponent: int = 2
    tilt_amplitude: float = 0.01

    def __post_init__(self):
        for name in ("m_sites", "n_bath", "tilt_exponent"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("j_imp", "j_bath", "w_bb", "w_ib", "tilt_amplitude"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ConfigError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.m_sites < 2:
            raise ConfigError(f"m_sites must be >= 2, got {self.m_sites}")
        if not 0 <= self.n_bath <= self.m_sites:
            raise ConfigError(
                f"n_bath must satisfy 0 <= n_bath <= m_sites, got n_bath={self.n_bath}, "
                f"m_sites={self.m_sites}"
            )
        if self.tilt_exponent not in (1, 2):
            raise ConfigError(f"tilt_exponent must be 1 or 2, got {self.tilt_exponent}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        missing = {"m_sites", "n_bath"} - set(data)
        if missing:
            raise ConfigError(f"missing model keys: {sorted(missing)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})

    @property
    def n_masks(self) -> int:
        return math.comb(self.m_sites, self.n_bath)

    @property
    def dimension(self) -> int:
        return self.m_sites * self.n_masks

    # fixed-order little-endian layout shared with the spectrum file header
    _PACK = "<IIddddId"

    def pack(self) -> bytes:
        return struct.pack(
            self._PACK,
            self.m_sites,
            self.n_bath,
            self.j_imp,
            self.j_bath,
            self.w_bb,
            self.w_ib,
            self.tilt_exponent,
            self.tilt_amplitude,
        )

    @classmethod
    def unpack(cls, raw: bytes) -> "ModelParams":
        m, n, ji, jb, wbb, wib, texp, tamp = struct.unpack(cls._PACK, raw)
        return cls(m, n, ji, jb, wbb, wib, texp, tamp)

    @classmethod
    def packed_size(cls) -> int:
        return struct.calcsize(cls._PACK)

    def content_hash(self) -> str:
        return hashlib.sha256(self.pack()).hexdigest()[:16]


@dataclass(frozen=True)
class BasisState:
    impurity_site: int
    bath_mask: int

    def occupied_sites(self) -> list[int]:
        return [j + 1 for j in range(self.bath_mask.bit_length()) if self.bath_mask >> j & 1]


@dataclass(frozen=True, eq=False)
class FockBasis:
    """All (impurity site, bath mask) configurations in canonical order.

    Stored as the sorted array of bath masks; the full list of states is
    generated lazily by :meth:`states`.
    """

    params: ModelParams
    masks: np.ndarray

    @property
    def m_sites(self) -> int:
        return self.params.m_sites

    @property
    def n_masks(self) -> int:
        return len(self.masks)

    @property
    def dimension(self) -> int:
        return self.m_sites * self.n_masks

    def __len__(self) -> int:
        return self.dimension

    def state(self, index: int) -> BasisState:
        if not 0 <= index < self.dimension:
            raise IndexError(f"basis index {index} out of range [0, {self.dimension})")
        site, rank = divmod(index, self.n_masks)
        return BasisState(site + 1, int(self.masks[rank]))

    def states(self):
        for index in range(self.dimension):
            yield self.state(index)

    def index(self, impurity_site: int, bath_mask: int) -> int:
        rank = int(np.searchsorted(self.masks, bath_mask))
        if rank >= self.n_masks or self.masks[rank] != bath_mask:
            raise KeyError(f"mask {bath_mask:#b} is not in the basis")
        if not 1 <= impurity_site <= self.m_sites:
            raise KeyError(f"impurity site {impurity_site} out of range")
        return (impurity_site - 1) * self.n_masks + rank

    def occupations(self) -> np.ndarray:
        """Bath occupation table, shape ``(n_masks, m_sites)``, entries 0/1."""
        bits = np.arange(self.m_sites, dtype=np.int64)
        return ((self.masks[:, None] >> bits[None, :]) & 1).astype(np.int8)


def _bath_masks(m_sites: int, n_bath: int) -> np.ndarray:
    masks = [sum(1 << j for j in combo) for combo in itertools.combinations(range(m_sites), n_bath)]
    return np.array(sorted(masks), dtype=np.int64)


def enumerate_basis(params: ModelParams, max_dimension: int | None = None) -> FockBasis:
    """Enumerate the ``M * C(M, N_B)`` basis states.

    Raises :class:`CapacityError` when the dimension exceeds ``max_dimension``.
    """
    dim = params.dimension
    if max_dimension is not None and dim > max_dimension:
        raise CapacityError(f"d_H={dim} exceeds the configured limit {max_dimension}")
    return FockBasis(params, _bath_masks(params.m_sites, params.n_bath))


def external_potential(site: int, params: ModelParams) -> float:
    """Weak symmetry-breaking tilt V(j), sites counted from 1."""
    m = params.m_sites
    if not 1 <= site <= m:
        raise ValueError(f"site {site} outside [1, {m}]")
    n = params.tilt_exponent
    return params.tilt_amplitude * (-0.5 + (site - 1) ** n / (m - 1) ** n)


def _potential_vector(params: ModelParams) -> np.ndarray:
    return np.array([external_potential(j, params) for j in range(1, params.m_sites + 1)])


def impurity_hamiltonian(params: ModelParams) -> np.ndarray:
    """Dense ``M x M`` one-body matrix of the impurity: hopping plus tilt."""
    m = params.m_sites
    h = np.diag(_potential_vector(params))
    off = np.arange(m - 1)
    h[off, off + 1] = -params.j_imp
    h[off + 1, off] = -params.j_imp
    return h


class SparseHamiltonian:
    """Real symmetric sparse matrix stored as its upper triangle (CSR).

    Matrix elements are assembled from integer-indexed COO data, so the
    reconstructed full matrix is exactly symmetric.
    """

    def __init__(self, upper: sp.spmatrix, params: ModelParams):
        upper = sp.triu(upper, format="csr")
        if upper.shape[0] != upper.shape[1]:
            raise DimensionError(f"non-square matrix {upper.shape}")
        self.upper = upper
        self.params = params
        self._diag = upper.diagonal()

    @property
    def dimension(self) -> int:
        return self.upper.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.upper.shape

    def diagonal(self) -> np.ndarray:
        return self._diag.copy()

    def to_csr(self) -> sp.csr_matrix:
        return (self.upper + self.upper.T - sp.diags(self._diag)).tocsr()

    def to_dense(self, order: str = "F") -> np.ndarray:
        out = np.zeros(self.shape, order=order)
        coo = self.upper.tocoo()
        out[coo.row, coo.col] = coo.data
        out[coo.col, coo.row] = coo.data
        return out

    def trace(self) -> float:
        return float(self._diag.sum())

    def frobenius_norm_sq(self) -> float:
        data = self.upper.data
        return float(2.0 * np.sum(data**2) - np.sum(self._diag**2))

    def norm_estimate(self) -> float:
        """Upper bound on the spectral radius (max absolute row sum)."""
        full = self.to_csr()
        return float(np.max(np.abs(full).sum(axis=1))) if self.dimension else 0.0

    def __matmul__(self, v):
        return apply_hamiltonian(self, v)


def apply_hamiltonian(h: SparseHamiltonian, v: np.ndarray) -> np.ndarray:
    """Matrix-vector (or matrix-block) product ``H @ v``."""
    v = np.asarray(v)
    if v.shape[0] != h.dimension:
        raise DimensionError(f"vector length {v.shape[0]} != dimension {h.dimension}")
    diag = h._diag if v.ndim == 1 else h._diag[:, None]
    return h.upper @ v + h.upper.T @ v - diag * v


def _bath_matrix(masks: np.ndarray, params: ModelParams) -> sp.csr_matrix:
    m = params.m_sites
    nb = len(masks)
    potential = _potential_vector(params)
    bits = np.arange(m, dtype=np.int64)
    occ = (masks[:, None] >> bits[None, :]) & 1

    diag = params.w_bb * np.sum(occ[:, :-1] * occ[:, 1:], axis=1) + occ @ potential

    rows, cols = [np.arange(nb)], [np.arange(nb)]
    vals = [diag]
    for j in range(m - 1):
        # one of sites j, j+1 occupied: moving the particle flips both bits
        movable = occ[:, j] != occ[:, j + 1]
        src = np.nonzero(movable)[0]
        dst = np.searchsorted(masks, masks[src] ^ (0b11 << j))
        keep = src < dst
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(np.full(keep.sum(), -params.j_bath))
    upper = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nb, nb)
    )
    return upper.tocsr()


def build_bath_hamiltonian(params: ModelParams) -> SparseHamiltonian:
    """Bath-only Hamiltonian on the ``C(M, N_B)``-dimensional bath space."""
    masks = _bath_masks(params.m_sites, params.n_bath)
    return SparseHamiltonian(_bath_matrix(masks, params), params)


def build_hamiltonian(basis: FockBasis, params: ModelParams) -> SparseHamiltonian:
    """Full Hamiltonian ``H_I + H_B + H_IB`` in the canonical basis order."""
    if basis.params.m_sites != params.m_sites or basis.params.n_bath != params.n_bath:
        raise DimensionError(
            f"basis built for (M={basis.params.m_sites}, N_B={basis.params.n_bath}) "
            f"but params have (M={params.m_sites}, N_B={params.n_bath})"
        )
    if basis.dimension != params.dimension:
        raise DimensionError(f"basis dimension {basis.dimension} != {params.dimension}")
    m, nb = params.m_sites, basis.n_masks
    h_bath_upper = _bath_matrix(basis.masks, params)
    h_imp_upper = sp.triu(sp.csr_matrix(impurity_hamiltonian(params)))
    occ = basis.occupations().astype(float)
    # on-site impurity-bath contact: diagonal entry W_IB * N_site(mask)
    contact = params.w_ib * occ.T.reshape(-1)
    upper = (
        sp.kron(h_imp_upper, sp.identity(nb), format="csr")
        + sp.kron(sp.identity(m), h_bath_upper, format="csr")
        + sp.diags(contact)
    )
    return SparseHamiltonian(upper.tocsr(), params)
