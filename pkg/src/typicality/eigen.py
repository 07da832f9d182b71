"""Full dense eigendecomposition and binary persistence of spectra.

Spectrum file layout (all little-endian)::

    b"CTSP" | version u32 (=1) | d_H u64 | ModelParams (see ModelParams.pack)
    | eigenvalues d_H x f64 | eigenvectors d_H*d_H x f64, column-major
"""
from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import (
    CapacityError,
    DimensionError,
    ParamsMismatchError,
    SolverError,
    SpectrumFileError,
    UnsupportedVersionError,
)
from .model import ModelParams, SparseHamiltonian, apply_hamiltonian

log = logging.getLogger(__name__)

MAGIC = b"CTSP"
VERSION = 1
DEFAULT_MEM_BUDGET = 8 * 1024**3
RESIDUAL_TOL = 1e-10
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    params: ModelParams
    residual_bound: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    def vector(self, alpha: int) -> np.ndarray:
        if self.eigenvectors is None:
            raise ValueError("spectrum was computed without eigenvectors")
        if not 0 <= alpha < self.dimension:
            raise IndexError(f"state index {alpha} out of range [0, {self.dimension})")
        return self.eigenvectors[:, alpha]


@dataclass(frozen=True)
class SpectrumReport:
    max_residual: float
    orthonormality_defect: float
    trace_defect: float
    frobenius_defect: float
    scale: float

    def ok(self, tol: float = RESIDUAL_TOL) -> bool:
        bound = tol * max(self.scale, 1.0)
        return self.max_residual <= bound and self.orthonormality_defect <= tol

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "orthonormality_defect": self.orthonormality_defect,
            "trace_defect": self.trace_defect,
            "frobenius_defect": self.frobenius_defect,
            "scale": self.scale,
        }


def dense_bytes(dimension: int, vectors: bool = True) -> int:
    """Peak working memory of a dense decomposition (matrix + eigenvectors)."""
    return (2 if vectors else 1) * 8 * dimension * dimension + 64 * dimension


def check_budget(dimension: int, mem_budget: int | None, vectors: bool = True) -> None:
    budget = DEFAULT_MEM_BUDGET if mem_budget is None else mem_budget
    need = dense_bytes(dimension, vectors)
    if need > budget:
        raise CapacityError(
            f"dense decomposition of d_H={dimension} needs ~{need / 1024**3:.2f} GiB, "
            f"budget is {budget / 1024**3:.2f} GiB"
        )


def _fix_signs(vectors: np.ndarray) -> None:
    # largest-magnitude component of each column made positive
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs[None, :]


def max_residual(h: SparseHamiltonian, eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> float:
    worst = 0.0
    for start in range(0, eigenvectors.shape[1], _CHUNK):
        block = eigenvectors[:, start : start + _CHUNK]
        res = apply_hamiltonian(h, block) - block * eigenvalues[None, start : start + _CHUNK]
        worst = max(worst, float(np.max(np.linalg.norm(res, axis=0))))
    return worst


def diagonalize(
    h: SparseHamiltonian,
    vectors: bool = True,
    mem_budget: int | None = None,
    tol: float = RESIDUAL_TOL,
) -> SpectrumResult:
    """Complete spectrum (and eigenbasis) of ``h`` by dense LAPACK solver.

    Uses the MRRR driver (``dsyevr``), which needs no ``O(d^2)`` workspace
    beyond the matrix and the eigenvectors.  Eigenvector signs are fixed so
    the largest-magnitude component of each column is positive.
    """
    d = h.dimension
    check_budget(d, mem_budget, vectors)
    dense = h.to_dense(order="F")
    try:
        if vectors:
            w, v = sla.eigh(dense, driver="evr", overwrite_a=True, check_finite=False)
        else:
            w = sla.eigh(dense, eigvals_only=True, driver="evr", overwrite_a=True, check_finite=False)
            v = None
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigensolver failed for d_H={d}, params={h.params}: {exc}") from exc
    del dense
    if v is None:
        return SpectrumResult(w, None, h.params)
    _fix_signs(v)
    residual = max_residual(h, w, v)
    scale = float(np.max(np.abs(w))) if d else 0.0
    if residual > tol * max(scale, 1.0):
        raise SolverError(
            f"eigen-residual {residual:.3e} exceeds {tol:.0e} x {max(scale, 1.0):.3g} "
            f"for d_H={d}, params={h.params}"
        )
    return SpectrumResult(w, v, h.params, residual_bound=residual)


def verify_spectrum(h: SparseHamiltonian, s: SpectrumResult) -> SpectrumReport:
    """Residual, orthonormality, trace and Frobenius defects of a decomposition."""
    if h.dimension != s.dimension:
        raise DimensionError(f"Hamiltonian dimension {h.dimension} != spectrum dimension {s.dimension}")
    w, v = s.eigenvalues, s.eigenvectors
    scale = float(np.max(np.abs(w))) if s.dimension else 0.0
    if v is None:
        residual = orth = float("nan")
    else:
        residual = max_residual(h, w, v)
        orth = 0.0
        for start in range(0, v.shape[1], _CHUNK):
            gram = v.T @ v[:, start : start + _CHUNK]
            idx = np.arange(gram.shape[1])
            gram[start + idx, idx] -= 1.0
            orth = max(orth, float(np.max(np.abs(gram))))
    return SpectrumReport(
        max_residual=residual,
        orthonormality_defect=orth,
        trace_defect=abs(float(np.sum(w)) - h.trace()),
        frobenius_defect=abs(float(np.sum(w**2)) - h.frobenius_norm_sq()),
        scale=scale,
    )


_HEAD = struct.Struct("<4sIQ")


def header_size() -> int:
    return _HEAD.size + ModelParams.packed_size()


def save_spectrum(s: SpectrumResult, path: str | os.PathLike) -> Path:
    """Write ``s`` atomically (temp file + rename)."""
    if s.eigenvectors is None:
        raise ValueError("only spectra with eigenvectors can be saved")
    path = Path(path)
    d = s.dimension
    vecs = np.asfortranarray(s.eigenvectors, dtype="<f8")
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, d))
        fh.write(s.params.pack())
        np.ascontiguousarray(s.eigenvalues, dtype="<f8").tofile(fh)
        # transpose of a Fortran array is C-contiguous: column-major on disk
        vecs.T.tofile(fh)
    os.replace(tmp, path)
    return path


def read_header(path: str | os.PathLike) -> tuple[int, ModelParams]:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(header_size())
    if len(raw) < _HEAD.size or raw[:4] != MAGIC:
        raise SpectrumFileError(f"{path}: not a spectrum file (bad magic)")
    _, version, d = _HEAD.unpack(raw[: _HEAD.size])
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported spectrum file version {version}")
    if len(raw) < header_size():
        raise SpectrumFileError(f"{path}: truncated header")
    return d, ModelParams.unpack(raw[_HEAD.size :])


def load_spectrum(
    path: str | os.PathLike, expect_params: ModelParams | None = None, vectors: bool = True
) -> SpectrumResult:
    path = Path(path)
    d, params = read_header(path)
    expected = header_size() + 8 * (d + d * d)
    actual = path.stat().st_size
    if actual != expected:
        raise SpectrumFileError(f"{path}: size {actual} bytes, expected {expected} (truncated or padded)")
    if expect_params is not None and expect_params != params:
        raise ParamsMismatchError(f"{path}: stored params {params} differ from expected {expect_params}")
    with open(path, "rb") as fh:
        fh.seek(header_size())
        w = np.fromfile(fh, dtype="<f8", count=d).astype(np.float64, copy=False)
        v = None
        if vectors:
            v = np.fromfile(fh, dtype="<f8", count=d * d).reshape(d, d).T
    return SpectrumResult(w, v, params)


def load_eigenvalues(path: str | os.PathLike) -> SpectrumResult:
    return load_spectrum(path, vectors=False)
