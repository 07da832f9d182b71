import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from typicality.errors import DomainError
from typicality.spectral import SmoothStaircase
from typicality.thermo import (
    beta_curve,
    beta_microcanonical,
    beta_microcanonical_or_nan,
    canonical_stats,
    solve_beta_canonical,
)

SIGMA = 2.0


@pytest.fixture(scope="module")
def gaussian_levels():
    # quantiles of a normal law: a spectrum whose smoothed DOS is exactly Gaussian
    n = 20_000
    return SIGMA * stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)


def test_gaussian_dos_beta(gaussian_levels):
    smooth = SmoothStaircase.fit(gaussian_levels, 10)
    # within one sigma of the centre the degree-10 staircase resolves ln(Omega) well;
    # the polynomial cannot follow the far Gaussian tails
    e = np.linspace(-SIGMA, SIGMA, 21)
    beta = beta_microcanonical(smooth, e, (gaussian_levels[0], gaussian_levels[-1]))
    np.testing.assert_allclose(beta, -e / SIGMA**2, atol=0.02)


def test_beta_vanishes_at_dos_peak(gaussian_levels):
    smooth = SmoothStaircase.fit(gaussian_levels, 10)
    assert abs(beta_microcanonical(smooth, 0.0)) < 0.01


def test_microcanonical_domain(gaussian_levels):
    smooth = SmoothStaircase.fit(gaussian_levels, 10)
    support = (gaussian_levels[0], gaussian_levels[-1])
    with pytest.raises(DomainError):
        beta_microcanonical(smooth, support[1] + 1.0, support)
    out = beta_microcanonical_or_nan(smooth, np.array([0.0, support[1] + 1.0]), support)
    assert np.isfinite(out[0]) and np.isnan(out[1])


def test_canonical_infinite_temperature():
    e = np.array([-3.0, -1.0, 0.5, 2.0, 4.0])
    c = canonical_stats(e, 0.0)
    assert c.mean_energy == pytest.approx(e.mean())
    assert c.log_z == pytest.approx(np.log(len(e)))
    assert c.energy_variance == pytest.approx(e.var())


def test_canonical_ground_state_dominance():
    e = np.array([-3.0, -1.0, 0.5, 2.0, 4.0])
    assert canonical_stats(e, 1e3).mean_energy == pytest.approx(-3.0, abs=1e-6)


def test_two_level_closed_form():
    e = np.array([-1.0, 1.0])
    assert canonical_stats(e, 1.0).mean_energy == pytest.approx(-np.tanh(1.0), abs=1e-15)
    assert canonical_stats(e, 1.0).energy_variance == pytest.approx(1 - np.tanh(1.0) ** 2)
    assert solve_beta_canonical(e, -np.tanh(1.0)) == pytest.approx(1.0, abs=1e-9)


def test_solve_at_mean_gives_zero():
    e = np.array([-2.0, -0.5, 0.0, 1.0, 3.5])
    assert solve_beta_canonical(e, e.mean()) == pytest.approx(0.0, abs=1e-9)


def test_negative_beta_in_upper_half(gaussian_levels):
    assert solve_beta_canonical(gaussian_levels, 1.0) < 0
    assert solve_beta_canonical(gaussian_levels, -1.0) > 0


def test_solve_outside_range():
    e = np.array([-1.0, 1.0])
    for target in (-1.0, 1.0, 2.0):
        with pytest.raises(DomainError):
            solve_beta_canonical(e, target)


def test_solve_needs_large_beta():
    # close to the ground state the root lies far outside the initial bracket
    e = np.array([-1.0, 1.0])
    target = -np.tanh(200.0) + 1e-12
    beta = solve_beta_canonical(e, target)
    assert canonical_stats(e, beta).mean_energy == pytest.approx(target, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), beta=st.floats(-5, 5))
def test_solve_inverts_mean_energy(seed, beta):
    e = np.sort(np.random.default_rng(seed).normal(size=50))
    target = canonical_stats(e, beta).mean_energy
    if not e[0] < target < e[-1]:
        return
    found = solve_beta_canonical(e, target)
    assert canonical_stats(e, found).mean_energy == pytest.approx(target, abs=1e-8 * (e[-1] - e[0]))


def test_beta_curve_agrees_with_canonical_for_gaussian(gaussian_levels):
    smooth = SmoothStaircase.fit(gaussian_levels, 10)
    grid = np.linspace(-2.0, 2.0, 21)
    curve = beta_curve(gaussian_levels, smooth, grid)
    assert np.all(np.isnan(curve.beta_micro_bath))
    np.testing.assert_allclose(curve.beta_micro_total, curve.beta_canonical, atol=0.03)
    rows = list(curve.rows())
    assert len(rows) == 21 and len(rows[0]) == 4
