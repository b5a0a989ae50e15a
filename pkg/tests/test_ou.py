import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pointer_qbm.jump_model import DiffusionConstants
from pointer_qbm.model import DomainError
from pointer_qbm.ou import (OUParameterError, finite_sample_laws, ou_from_diffusion,
                            ou_moment_ode_rhs, ou_moments, simulate_ou)


@st.composite
def diffusions(draw):
    dx = draw(st.floats(0.0, 5.0))
    dp = draw(st.floats(1e-3, 5.0))
    rho = draw(st.floats(-1.0, 1.0))
    return DiffusionConstants(dx, dp, rho * math.sqrt(dx * dp))


@given(diffusions())
def test_factorization_reproduces_diffusion(d):
    B = ou_from_diffusion(d).B
    BB = B @ B.T
    scale = max(d.D_x, d.D_p)
    assert np.allclose(BB, [[d.D_x, d.D_xp], [d.D_xp, d.D_p]], atol=1e-10 * scale)


def test_factorization_without_position_noise():
    p = ou_from_diffusion(DiffusionConstants(0.0, 2.0, 0.0))
    assert p.D_x == 0.0 and p.D_p == pytest.approx(2.0) and p.D_xp == 0.0


@pytest.mark.parametrize("d", [DiffusionConstants(1.0, 1.0, 1.5), DiffusionConstants(-1.0, 1.0, 0.0),
                               DiffusionConstants(0.0, 1.0, 0.3)])
def test_invalid_diffusion(d):
    with pytest.raises(OUParameterError):
        ou_from_diffusion(d)


def test_hand_values():
    d = DiffusionConstants(0.5, 2.0, 0.3)
    m = ou_moments(d, np.array([0.0, 1.0]))
    a = 1 - math.exp(-1)
    assert m.var_x[0] == 0 and m.var_p[0] == 0 and m.cov_xp[0] == 0
    assert m.var_p[1] == pytest.approx(1 - math.exp(-2), rel=1e-15)
    assert m.cov_xp[1] == pytest.approx(a * a + 0.3 * a, rel=1e-15)
    assert m.var_x[1] == pytest.approx(3.1 - a * a - 2.6 * a, rel=1e-14)


@given(diffusions(), st.floats(0.01, 10.0))
def test_closed_form_solves_moment_odes(d, t):
    h = 1e-6 * max(t, 1.0)
    m = ou_moments(d, np.array([t - h, t, t + h]))
    fd = [(v[2] - v[0]) / (2 * h) for v in (m.var_x, m.var_p, m.cov_xp)]
    rhs = ou_moment_ode_rhs((m.var_x[1], m.var_p[1], m.cov_xp[1]), d)
    scale = d.D_x + d.D_p + abs(d.D_xp) + abs(m.var_p[1])
    assert np.allclose(fd, rhs, atol=1e-5 * scale)


def test_small_time_expansion_is_stable():
    d = DiffusionConstants(0.1, 1.0, 0.2)
    m = ou_moments(d, np.array([1e-12]))
    assert m.var_p[0] == pytest.approx(1e-12, rel=1e-6)
    assert m.var_x[0] == pytest.approx(0.1e-12, rel=1e-3)


def test_negative_time():
    with pytest.raises(DomainError):
        ou_moments(DiffusionConstants(0, 1, 0), -1.0)


def test_simulation_matches_closed_form():
    d = DiffusionConstants(0.5, 2.0, 0.3)
    t, x, p = simulate_ou(ou_from_diffusion(d), 0.0, 0.0, 2.0, 1e-3, seed=4, n_runs=20000)
    m = ou_moments(d, t[[1000, 2000]])
    for j, i in enumerate((1000, 2000)):
        assert p[:, i].var() == pytest.approx(m.var_p[j], rel=0.05)
        assert x[:, i].var() == pytest.approx(m.var_x[j], rel=0.05)
        assert np.mean(x[:, i] * p[:, i]) == pytest.approx(m.cov_xp[j], rel=0.08)


def test_simulation_domain():
    params = ou_from_diffusion(DiffusionConstants(0, 1, 0))
    with pytest.raises(DomainError):
        simulate_ou(params, 0, 0, 1.0, 0.3)
    with pytest.raises(DomainError):
        simulate_ou(params, 0, 0, 1.0, 0.0)


def test_finite_sample_laws_hand_values():
    d = DiffusionConstants(0.0, 2.0, 0.0)
    law = finite_sample_laws(d, np.array([1.0]), 101)
    vp = 1 - math.exp(-2)
    assert law.var_mean_p[0] == pytest.approx(vp / 101)
    assert law.var_var_p[0] == pytest.approx(2 * vp * vp / 100)
    with pytest.raises(DomainError):
        finite_sample_laws(d, 1.0, 1)
