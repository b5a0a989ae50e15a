import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pointer_qbm.gaussian import pointer_fixed_point
from pointer_qbm.jump_model import (analytic_diffusion, jump_model_params, langevin_limit,
                                    pointer_jump_rate, simulate_jump_sde)
from pointer_qbm.model import DomainError, ModelParams
from pointer_qbm.ou import ou_moments


def test_frozen_values():
    # 2 V_x + V_p / 8 - 1/2 with the verified kappa = 1 widths
    assert pointer_jump_rate(1.0) == pytest.approx(2 * 0.5275536792717128 + 0.6128525258755513 / 8 - 0.5, rel=1e-13)
    assert analytic_diffusion(100.0).D_p == pytest.approx(1.8097504384745681, rel=1e-12)


def test_params_follow_pointer_widths():
    k = 7.0
    ps = pointer_fixed_point(k)
    jm = jump_model_params(k)
    assert jm.j_x == pytest.approx(math.sqrt(2 * ps.var_x_ps), rel=1e-15)
    assert jm.j_p == pytest.approx(math.sqrt(2 * ps.var_p_ps), rel=1e-15)
    d = analytic_diffusion(k)
    assert d.D_xp**2 == pytest.approx(d.D_x * d.D_p, rel=1e-12)


@given(st.floats(-8.0, 8.0))
def test_pointer_rate_positive_everywhere(lk):
    # the rate tends to (sqrt(2) - 1)/2 for small kappa and grows like sqrt(kappa)
    assert pointer_jump_rate(10.0**lk) > 0.2


def test_small_kappa_rate_limit():
    assert pointer_jump_rate(1e-8) == pytest.approx((math.sqrt(2) - 1) / 2, rel=1e-6)


def test_semiclassical_limit_dp():
    assert analytic_diffusion(1e4).D_p == pytest.approx(2.0, rel=1e-2)
    assert analytic_diffusion(1e8).D_p == pytest.approx(2.0, rel=1e-3)


def test_jump_sde_moments_are_ou_moments():
    k = 10.0
    jm = jump_model_params(k)
    t, x, p = simulate_jump_sde(jm, 0.0, 0.0, 2.0, 0.01, seed=3, n_runs=20000)
    m = ou_moments(analytic_diffusion(k), t[[50, 100, 200]])
    for j, i in enumerate((50, 100, 200)):
        for est, true in ((p[:, i].var(), m.var_p[j]), (x[:, i].var(), m.var_x[j])):
            assert abs(est - true) < 5.0 * true * math.sqrt(2.0 / 20000) * 1.5
        c = np.mean(x[:, i] * p[:, i])
        assert abs(c - m.cov_xp[j]) < 5.0 * math.sqrt(m.var_x[j] * m.var_p[j] / 20000) * 1.5


def test_jump_sde_counts_are_poisson():
    jm = jump_model_params(1.0)
    t, x, p = simulate_jump_sde(jm, 0.0, 0.0, 4.0, 0.004, seed=1, n_runs=5000)
    # with p = 0 and no drift between, each jump changes p by +-j_p e^{-s}; zero-mean
    assert abs(p[:, -1].mean()) < 5 * p[:, -1].std() / math.sqrt(5000)


def test_jump_sde_seeded():
    jm = jump_model_params(3.0)
    a = simulate_jump_sde(jm, 0.1, 0.2, 1.0, 0.01, seed=9, n_runs=3)
    b = simulate_jump_sde(jm, 0.1, 0.2, 1.0, 0.01, seed=9, n_runs=3)
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])


def test_jump_sde_without_jumps_is_drift():
    jm = jump_model_params(3.0)
    t, x, p = simulate_jump_sde(jm, 0.1, 0.2, 1.0, 0.01, seed=0, rate=0.0)
    assert np.allclose(p[0], 0.2 * np.exp(-t), rtol=1e-13)
    assert np.allclose(x[0], 0.1 + 0.2 * (1 - np.exp(-t)), rtol=1e-13)


def test_jump_sde_domain():
    jm = jump_model_params(1e4)
    with pytest.raises(DomainError):
        simulate_jump_sde(jm, 0, 0, 1.0, 0.1, 0)
    with pytest.raises(DomainError):
        simulate_jump_sde(jump_model_params(1.0), 0, 0, 1.0, 0.3, 0)


@pytest.mark.parametrize("m,T,g,hbar", [(1.0, 1.0, 0.5, 1.0), (2.0, 300.0, 0.1, 1e-3),
                                        (1e-3, 5.0, 7.0, 0.2)])
def test_langevin_coefficients(m, T, g, hbar):
    lim = langevin_limit(ModelParams.from_physical(m, T, g, hbar))
    assert lim.drift_coefficient == -2.0 * g
    assert lim.noise_amplitude == pytest.approx(math.sqrt(4.0 * g * m * T), rel=1e-15)
    d = analytic_diffusion(lim.kappa).D_p
    assert lim.noise_amplitude_finite == pytest.approx(math.sqrt(2.0 * g * m * T * d), rel=1e-15)


def test_langevin_dimensionless():
    lim = langevin_limit(50.0)
    assert lim.drift == -1.0 and lim.D_p_limit == 2.0
    assert lim.noise == pytest.approx(math.sqrt(analytic_diffusion(50.0).D_p))
    assert lim.noise_amplitude is None
