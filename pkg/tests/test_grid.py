import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pointer_qbm.gaussian import (gaussian_state, gaussian_var_p, integrate_moments,
                                  pointer_fixed_point)
from pointer_qbm.grid import (DegenerateJumpError, Grid, GridState, Propagator, StepSizeError,
                              apply_jump, default_dt, evolve, jump_rate, jump_rate_operator,
                              measure_moments, nlpse_step, purity_rate_check)
from pointer_qbm.jump_model import pointer_jump_rate
from pointer_qbm.model import DomainError, Moments


def pointer(kappa, n=512, n_sigma=24.0, x0=0.0, p0=0.0):
    g = Grid.for_pointer(kappa, n, n_sigma=n_sigma)
    ps = pointer_fixed_point(kappa)
    return gaussian_state(g, kappa, x0, p0, ps.var_x_ps, ps.cov_xp_ps, min_points_per_sigma=4)


@pytest.mark.parametrize("n", [0, 3, 100, 1000])
def test_grid_requires_power_of_two(n):
    with pytest.raises(DomainError):
        Grid(n, 0.0, 1.0)


def test_grid_geometry():
    g = Grid.centered(8, 1.0, 4.0)
    assert g.dx == 0.5 and g.x[0] == -1.0 and g.x[-1] == 2.5
    assert np.allclose(g.momenta(2.0), g.wavenumbers / 2.0)
    assert g.shifted(2).x_min == 0.0
    assert g.same_lattice(Grid(8, -1.0, 3.0)) and not g.same_lattice(g.shifted(1))


def test_pointer_rate_formula_and_operator_agree():
    for k in (1.0, 10.0):
        s = pointer(k)
        assert jump_rate(s, k) == pytest.approx(pointer_jump_rate(k), rel=1e-9)
        assert jump_rate_operator(s, k) == pytest.approx(pointer_jump_rate(k), rel=1e-9)


def test_jump_on_gaussian_triples_width():
    # J psi is proportional to (x - <x>) psi for any Gaussian, so V_x -> 3 V_x
    k = 10.0
    s = pointer(k, n=1024, n_sigma=40.0)
    ps = pointer_fixed_point(k)
    j = apply_jump(s, k)
    assert j.norm == pytest.approx(1.0, abs=1e-12)
    m = measure_moments(j)
    assert m.var_x == pytest.approx(3.0 * ps.var_x_ps, rel=1e-8)
    assert m.mean_x == pytest.approx(0.0, abs=1e-10)


def test_jump_of_null_state_is_degenerate():
    prop = Propagator(64, 0.1, 1.0, 1e-3)
    m = np.zeros((1, 6))
    with pytest.raises(DegenerateJumpError):
        prop.jump(np.zeros((1, 64), complex), np.array([-3.2]), m)


def test_soliton_short_run():
    k = 10.0
    s = pointer(k, n=512, p0=0.3)
    ps = pointer_fixed_point(k)
    t, m, final = evolve(s, k, 0.5, 1e-4, record_stride=500)
    assert np.allclose(m[:, 2], ps.var_x_ps, rtol=1e-4)
    assert np.allclose(m[:, 3], ps.var_p_ps, rtol=1e-4)
    assert np.allclose(m[:, 4], ps.cov_xp_ps, rtol=1e-4)
    assert np.allclose(m[:, 1], 0.3 * np.exp(-t), rtol=1e-4)
    assert final.norm == pytest.approx(1.0, abs=1e-12)


def test_grid_matches_moment_equations():
    k = 1.0
    g = Grid.centered(512, 0.0, 20.0)
    vx, c = 1.2, -0.3
    s = gaussian_state(g, k, 0.0, 0.5, vx, c)
    t, m, _ = evolve(s, k, 1.0, 1e-3, record_stride=100)
    ref = integrate_moments(Moments(0, 0.5, vx, gaussian_var_p(vx, c, k), c), k, 1.0, 1e-3)
    sel = np.arange(0, 1001, 100)
    assert np.allclose(m[:, 2], ref.var_x[sel], rtol=1e-4)
    assert np.allclose(m[:, 4], ref.cov_xp[sel], rtol=1e-3, atol=1e-5)
    assert np.allclose(m[:, 0], ref.mean_x[sel], rtol=1e-3, atol=1e-8)


def test_nlpse_step_is_norm_preserving_and_time_advancing():
    s = pointer(10.0, n=256)
    s2 = nlpse_step(s, 10.0, 1e-4)
    assert s2.norm == pytest.approx(1.0, abs=1e-12)
    assert s2.time == pytest.approx(1e-4)


def test_step_size_error_when_drift_cannot_be_met():
    k = 10.0
    s = pointer(k, n=128)
    with pytest.raises(StepSizeError):
        evolve(s, k, 0.01, 1e-3, max_norm_drift=1e-17)


def test_unknown_ordering():
    with pytest.raises(DomainError):
        Propagator(64, 0.1, 1.0, 1e-3, ordering="right")


def test_rows_are_independent():
    k = 10.0
    a, b = pointer(k, n=256), pointer(k, n=256, p0=0.7)
    b = apply_jump(b, k)
    g = a.grid
    prop = Propagator(g.n_points, g.dx, k, 1e-4)
    both = np.array([a.psi, b.psi])
    xm = np.full(2, g.x_min)
    phi = prop.fft(both)
    out = prop.step_refined(both, phi, xm, prop.moments(both, phi, xm), 1e-6)
    for i, s in enumerate((a, b)):
        one = s.psi[None, :]
        f1 = prop.fft(one)
        r = prop.step_refined(one, f1, xm[:1], prop.moments(one, f1, xm[:1]), 1e-6)
        assert np.array_equal(r[0][0], out[0][i])


@given(st.floats(-1.0, 1.0), st.floats(0.5, 2.0))
def test_symmetric_ordering_preserves_parity(c, scale):
    k = 5.0
    g = Grid.centered(128, 0.0, 12.0)
    x = g.x + 0.5 * g.dx                       # lattice symmetric about 0 after shift
    g = Grid(128, x[0], x[0] + g.length)
    psi = np.exp(-(g.x**2) / (4 * 0.3 * scale) * (1 - 1j * c)) * (1 + 0.3 * g.x**2)
    s = GridState(g, psi, k).normalized()
    _, _, out = evolve(s, k, 0.01, 1e-3, ordering="symmetric", recenter=False)
    assert np.allclose(out.psi, out.psi[::-1], atol=1e-12)


def test_recenter_discards_and_renormalizes():
    k = 1.0
    g = Grid.centered(64, 0.0, 16.0)
    prop = Propagator(64, g.dx, k, 1e-3)
    psi = np.exp(-((g.x - 5.0) ** 2))[None, :].astype(complex)
    psi[0, :8] = 1e-3                                   # far-left tail that wraps away
    psi /= math.sqrt(np.sum(abs(psi) ** 2) * g.dx)
    xm = np.array([g.x_min])
    phi = prop.fft(psi)
    m = prop.moments(psi, phi, xm)
    moved, lost = prop.recenter(psi, phi, xm, m)
    assert list(moved) == [0] and lost[0] > 0
    assert np.sum(abs(psi) ** 2) * g.dx == pytest.approx(1.0, abs=1e-12)
    assert xm[0] > g.x_min


def test_purity_rate_identity():
    k = 1.0
    g = Grid.centered(128, 0.0, 24.0)
    for vx, c in [(0.6, 0.5), (1.5, -0.2)]:
        s = gaussian_state(g, k, 0.0, 0.2, vx, c, min_points_per_sigma=4)
        r, r_op, slope = purity_rate_check(s, k, 1e-5)
        assert r == pytest.approx(r_op, rel=1e-8)
        assert r == pytest.approx(slope, rel=1e-2)


def test_default_dt():
    assert default_dt(1.0) == 1e-4
    assert default_dt(1e8) == pytest.approx(0.1 / pointer_jump_rate(1e8))
    assert default_dt(1e8) < 1e-4


def test_second_order_refinement():
    # halving dx and dt together: successive differences shrink about fourfold,
    # and the last change stays below four Richardson error estimates
    k = 10.0
    finals = []
    for n, dt in ((128, 1e-3), (256, 5e-4), (512, 2.5e-4)):
        g = Grid.centered(n, 0.0, 4.0)
        s = gaussian_state(g, k, 0.0, 0.5, 0.04, 0.05, min_points_per_sigma=2)
        finals.append(evolve(s, k, 0.4, dt, record_stride=10**6)[1][-1])
    d1, d2 = finals[1] - finals[0], finals[2] - finals[1]
    ratio = np.abs(d1 / d2)
    assert np.all((ratio > 2.5) & (ratio < 5.5)), ratio
    assert np.all(np.abs(d2) < 4 * np.abs(d1) / 3)
