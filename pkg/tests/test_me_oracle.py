import numpy as np
import pytest

from pointer_qbm.gaussian import gaussian_state, pointer_fixed_point
from pointer_qbm.grid import Grid
from pointer_qbm.me_oracle import (AlignmentError, DensityMatrix, compare_ensemble, me_evolve,
                                   me_step, trace_distance)
from pointer_qbm.model import DomainError


def state(k=1.0, x0=0.0, p0=0.4, vx=0.8, c=0.2, n=128, width=24.0):
    return gaussian_state(Grid.centered(n, 0.0, width), k, x0, p0, vx, c, min_points_per_sigma=4)


def test_pure_state_density_matrix():
    rho = DensityMatrix.from_state(state())
    assert rho.trace == pytest.approx(1.0, abs=1e-12)
    assert rho.purity() == pytest.approx(1.0, abs=1e-12)
    assert rho.hermiticity_error() < 1e-15


def test_expectations_match_wavefunction_moments():
    s = state()
    x, p, x2, p2, xp = DensityMatrix.from_state(s).expectations()
    assert x == pytest.approx(0.0, abs=1e-10)
    assert p == pytest.approx(0.4, abs=1e-9)
    assert x2 - x * x == pytest.approx(0.8, rel=1e-8)
    # symmetrized covariance is half of C_xp
    assert xp - x * p == pytest.approx(0.1, rel=1e-6)


def test_evolution_keeps_trace_hermiticity_positivity():
    rho, _, _ = me_evolve(DensityMatrix.from_state(state()), 1.0, 0.5, 1e-3)
    assert rho.trace == pytest.approx(1.0, abs=1e-12)
    assert rho.hermiticity_error() < 1e-12
    assert rho.min_eigenvalue() > -1e-8
    assert rho.purity() < 1.0


def test_ehrenfest_means_and_momentum_spread():
    # d<x>/dt = <p>, d<p>/dt = -<p>, d<p^2>/dt = 2 - 2 <p^2>
    k = 1.0
    rho0 = DensityMatrix.from_state(state(k))
    _, t, obs = me_evolve(rho0, k, 1.0, 1e-3, record_every=100)
    x0, p0, _, p20, _ = obs[0]
    assert np.allclose(obs[:, 1], p0 * np.exp(-t), atol=2e-4)
    assert np.allclose(obs[:, 0], x0 + p0 * (1 - np.exp(-t)), atol=2e-4)
    assert np.allclose(obs[:, 3], 1.0 + (p20 - 1.0) * np.exp(-2 * t), rtol=2e-3)


def test_trace_distance_properties():
    a = DensityMatrix.from_state(state(x0=-5.0, vx=0.7)).rho
    b = DensityMatrix.from_state(state(x0=5.0, vx=0.7)).rho
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    assert trace_distance(a, b) == pytest.approx(1.0, abs=1e-9)
    assert trace_distance(a, b) == pytest.approx(trace_distance(b, a), abs=1e-14)
    mix = 0.5 * (a + b)
    assert trace_distance(a, mix) == pytest.approx(0.5, abs=1e-9)


def test_mixture_of_identical_states_is_pure():
    s = state()
    assert compare_ensemble([s, s, s], DensityMatrix.from_state(s)) == pytest.approx(0.0, abs=1e-10)


def test_alignment_checks():
    s = state()
    other = state(n=256)
    with pytest.raises(AlignmentError):
        compare_ensemble([other], DensityMatrix.from_state(s))
    late = DensityMatrix.from_state(s)
    late.time = 1.0
    with pytest.raises(AlignmentError):
        compare_ensemble([s], late)


def test_size_limit():
    k = 10.0
    ps = pointer_fixed_point(k)
    g = Grid.for_pointer(k, 512)
    s = gaussian_state(g, k, 0.0, 0.0, ps.var_x_ps, ps.cov_xp_ps)
    with pytest.raises(DomainError):
        DensityMatrix.from_state(s)


def test_single_step_matches_integrator():
    rho = DensityMatrix.from_state(state())
    one = me_step(rho, 1.0, 1e-3)
    two, _, _ = me_evolve(rho, 1.0, 1e-3, 1e-3)
    assert np.allclose(one.rho, two.rho, atol=1e-14)
