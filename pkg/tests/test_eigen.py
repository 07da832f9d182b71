import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from typicality import eigen
from typicality.eigen import (
    SpectrumResult,
    diagonalize,
    header_size,
    load_eigenvalues,
    load_spectrum,
    read_header,
    save_spectrum,
    verify_spectrum,
)
from typicality.errors import (
    CapacityError,
    ParamsMismatchError,
    SpectrumFileError,
    UnsupportedVersionError,
)
from typicality.model import ModelParams, SparseHamiltonian, build_hamiltonian, enumerate_basis

DUMMY = ModelParams(2, 1)


def wrap(matrix) -> SparseHamiltonian:
    return SparseHamiltonian(sp.csr_matrix(np.asarray(matrix, dtype=float)), DUMMY)


def test_two_by_two():
    s = diagonalize(wrap([[0, -1], [-1, 0]]))
    np.testing.assert_allclose(s.eigenvalues, [-1, 1], atol=1e-15)
    r = 1 / np.sqrt(2)
    # sign fixing keeps the largest component positive; ties resolve to the first row
    np.testing.assert_allclose(np.abs(s.eigenvectors), r, atol=1e-15)
    np.testing.assert_allclose(s.eigenvectors[:, 0], [r, r], atol=1e-15)
    assert abs(s.eigenvectors[0, 1] * s.eigenvectors[1, 1] + 0.5) < 1e-15


def test_diagonal_matrix():
    diag = np.array([3.0, -1.0, 2.0, 0.5])
    s = diagonalize(wrap(np.diag(diag)))
    order = np.argsort(diag)
    np.testing.assert_array_equal(s.eigenvalues, diag[order])
    np.testing.assert_array_equal(s.eigenvectors, np.eye(4)[:, order])


def test_matches_independent_solver_fixture():
    ref = json.loads((DATA / "m3n1_reference.json").read_text())
    params = ModelParams(**ref["params"])
    s = diagonalize(build_hamiltonian(enumerate_basis(params), params))
    np.testing.assert_allclose(s.eigenvalues, ref["eigenvalues"], rtol=0, atol=1e-10)


def test_eigenvalues_only(solve):
    params, h, full = solve(6, 3)
    w = diagonalize(h, vectors=False)
    assert w.eigenvectors is None
    np.testing.assert_allclose(w.eigenvalues, full.eigenvalues, atol=1e-12)


def test_sign_convention(solve):
    _, _, s = solve(5, 2)
    v = s.eigenvectors
    rows = np.argmax(np.abs(v), axis=0)
    assert np.all(v[rows, np.arange(v.shape[1])] > 0)


def test_budget_is_enforced():
    params = ModelParams(12, 6)
    with pytest.raises(CapacityError):
        eigen.check_budget(params.dimension, 1024**3)
    eigen.check_budget(params.dimension, 4 * 1024**3)


# --- verification -----------------------------------------------------------


def test_verify_exact(solve):
    _, h, s = solve(6, 3)
    rep = verify_spectrum(h, s)
    tol = 1e-10 * max(rep.scale, 1)
    assert rep.ok()
    assert rep.max_residual < tol and rep.orthonormality_defect < 1e-10
    assert rep.trace_defect < tol and rep.frobenius_defect < tol * rep.scale


def test_verify_zeroed_column(solve):
    _, h, s = solve(5, 2)
    v = s.eigenvectors.copy()
    v[:, 3] = 0.0
    rep = verify_spectrum(h, SpectrumResult(s.eigenvalues, v, s.params))
    assert rep.orthonormality_defect == pytest.approx(1.0, abs=1e-10)
    assert not rep.ok()


def test_verify_perturbed_eigenvalue(solve):
    _, h, s = solve(5, 2)
    w = s.eigenvalues.copy()
    w[7] += 1e-3
    rep = verify_spectrum(h, SpectrumResult(w, s.eigenvectors, s.params))
    assert rep.trace_defect == pytest.approx(1e-3, rel=1e-6)
    assert rep.max_residual == pytest.approx(1e-3, rel=1e-6)


# --- persistence ------------------------------------------------------------


def test_roundtrip_bit_exact(tmp_path, solve):
    params, _, s = solve(6, 3, w_bb=0.37, tilt_exponent=1)
    path = save_spectrum(s, tmp_path / "s.ctsp")
    d = params.dimension
    assert path.stat().st_size == header_size() + 8 * (d + d * d)
    assert header_size() == 68
    back = load_spectrum(path, expect_params=params)
    assert back.params == params
    assert back.eigenvalues.tobytes() == s.eigenvalues.tobytes()
    assert np.array_equal(back.eigenvectors, s.eigenvectors)
    assert read_header(path) == (d, params)
    np.testing.assert_array_equal(load_eigenvalues(path).eigenvalues, s.eigenvalues)


def test_save_is_deterministic(tmp_path, solve):
    _, _, s = solve(5, 2)
    a = save_spectrum(s, tmp_path / "a.ctsp").read_bytes()
    b = save_spectrum(s, tmp_path / "b.ctsp").read_bytes()
    assert a == b
    assert not list(tmp_path.glob("*.part"))


def test_column_major_layout(tmp_path, solve):
    params, _, s = solve(4, 2)
    raw = np.fromfile(save_spectrum(s, tmp_path / "s.ctsp"), dtype="<f8", offset=header_size())
    d = params.dimension
    np.testing.assert_array_equal(raw[:d], s.eigenvalues)
    np.testing.assert_array_equal(raw[d : 2 * d], s.eigenvectors[:, 0])


@pytest.fixture
def saved(tmp_path, solve):
    params, _, s = solve(4, 2)
    return params, save_spectrum(s, tmp_path / "s.ctsp")


def test_corrupt_magic(saved):
    _, path = saved
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(SpectrumFileError, match="magic"):
        load_spectrum(path)


def test_unsupported_version(saved):
    _, path = saved
    raw = bytearray(path.read_bytes())
    raw[4:8] = (2).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        load_spectrum(path)


def test_truncated_file(saved):
    _, path = saved
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(SpectrumFileError, match="size"):
        load_spectrum(path)


def test_params_mismatch(saved):
    params, path = saved
    with pytest.raises(ParamsMismatchError):
        load_spectrum(path, expect_params=params.replace(w_bb=0.5))


def test_save_requires_vectors(tmp_path):
    with pytest.raises(ValueError):
        save_spectrum(SpectrumResult(np.zeros(2), None, DUMMY), tmp_path / "x.ctsp")


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 40))
def test_random_symmetric_decomposition(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a = a + a.T
    s = diagonalize(wrap(a))
    np.testing.assert_allclose(s.eigenvalues, np.linalg.eigvalsh(a), atol=1e-10 * max(1, np.abs(a).max()))
    np.testing.assert_allclose(s.eigenvectors.T @ s.eigenvectors, np.eye(n), atol=1e-12)
