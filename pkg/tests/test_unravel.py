import json
import math

import numpy as np
import pytest

from pointer_qbm.gaussian import ResolutionError, pointer_fixed_point
from pointer_qbm.grid import evolve, measure_moments
from pointer_qbm.model import DomainError
from pointer_qbm.unravel import (EnsembleConfig, initial_state, perturb_initial,
                                 post_jump_relaxation, run_ensemble, run_trajectory,
                                 trajectory_seed)


def cfg(**kw):
    base = dict(kappa=10.0, n_traj=6, t_final=0.2, dt=2e-4, n_points=128,
                min_points_per_sigma=4, record_stride=50, ordering="symmetric", master_seed=7)
    base.update(kw)
    return EnsembleConfig(**base)


def test_trajectory_seeds():
    s = [trajectory_seed(3, i) for i in range(100)]
    assert len(set(s)) == 100
    assert s == [trajectory_seed(3, i) for i in range(100)]
    assert trajectory_seed(4, 0) != s[0]


def test_config_validation():
    with pytest.raises(DomainError):
        cfg(n_traj=0)
    with pytest.raises(DomainError):
        cfg(jump_scheme="other")
    with pytest.raises(DomainError):
        cfg(t_final=0.1234567, dt=1e-3).n_steps


def test_initial_state_descriptors(tmp_path):
    c = cfg(init="pointer:0.1,0.2", n_points=512, min_points_per_sigma=16)
    m = measure_moments(initial_state(c))
    assert m.mean_x == pytest.approx(0.1, abs=1e-10) and m.mean_p == pytest.approx(0.2, abs=1e-10)
    ps = pointer_fixed_point(10.0)
    vx, cx = 2 * ps.var_x_ps, 0.0
    vp = (1 / 100 + cx * cx) / (4 * vx)
    m = measure_moments(initial_state(cfg(init=f"gauss:{vx},{vp},{cx}", n_points=512, width=5.0)))
    assert m.var_x == pytest.approx(vx, rel=1e-8)
    with pytest.raises(DomainError):
        initial_state(cfg(init=f"gauss:{vx},{2 * vp},{cx}"))
    with pytest.raises(DomainError):
        initial_state(cfg(init="plane-wave"))
    with pytest.raises(ResolutionError):
        initial_state(cfg(n_points=32))
    f = tmp_path / "sp.json"
    f.write_text(json.dumps([{"w": 0.25, "x": -0.6}, {"w": 0.75, "x": 0.6}]))
    s = initial_state(cfg(init=f"superpos:{f}", width=4.0, n_points=256))
    left = np.sum(np.abs(s.psi[s.grid.x < 0]) ** 2) * s.grid.dx
    assert left == pytest.approx(0.25, abs=1e-6)


def test_perturbation():
    s = initial_state(cfg())
    assert np.array_equal(perturb_initial(s.psi, s.grid, 1, 0.0), s.psi)
    a = perturb_initial(s.psi, s.grid, 1, 1e-3)
    assert np.sum(np.abs(a) ** 2) * s.grid.dx == pytest.approx(1.0, abs=1e-12)
    assert 1e-5 < np.abs(a - s.psi).max() / np.abs(s.psi).max() < 1e-2
    assert not np.array_equal(a, perturb_initial(s.psi, s.grid, 2, 1e-3))
    assert np.array_equal(a, perturb_initial(s.psi, s.grid, 1, 1e-3))


def test_zero_rate_reproduces_deterministic_evolution():
    c = cfg(n_traj=1, rate_override=0.0, asymmetry=0.0, record_stride=1, t_final=0.05,
            ordering="left")
    init = initial_state(c)
    rec = run_ensemble(c, init).records[0]
    t, m, _ = evolve(init, c.kappa, c.t_final, c.dt, record_stride=1)
    assert len(rec.jump_times) == 0
    assert np.array_equal(rec.moments, m)


def test_constant_rate_gives_poisson_counts():
    lam, T = 40.0, 0.2
    # forced jumps drive the state far from a pointer state; the counting
    # statistics do not care about the tighter default drift bound
    c = cfg(n_traj=200, rate_override=lam, t_final=T, dt=5e-4, record_stride=400,
            max_norm_drift=1e-3, width=6.0, n_points=256)
    res = run_ensemble(c)
    n = np.array([len(r.jump_times) for r in res.records])
    assert not res.failures
    assert abs(n.mean() - lam * T) < 4 * math.sqrt(lam * T / len(n))
    assert n.var(ddof=1) == pytest.approx(lam * T, rel=0.35)


def test_bernoulli_scheme_counts():
    lam, T = 40.0, 0.2
    res = run_ensemble(cfg(n_traj=200, rate_override=lam, t_final=T, dt=5e-4, record_stride=400,
                           jump_scheme="bernoulli", max_norm_drift=1e-3, width=6.0, n_points=256))
    n = np.array([len(r.jump_times) for r in res.records])
    assert abs(n.mean() - lam * T) < 4 * math.sqrt(lam * T / len(n))


def test_bit_identical_across_batching_and_threads():
    ref = run_ensemble(cfg(batch_size=64))
    for kw in (dict(batch_size=1), dict(batch_size=4, threads=3)):
        other = run_ensemble(cfg(**kw))
        for a, b in zip(ref.records, other.records):
            assert a.seed == b.seed
            assert np.array_equal(a.moments, b.moments)
            assert np.array_equal(a.jump_times, b.jump_times)


def test_single_trajectory_api_matches_ensemble():
    c = cfg(n_traj=1)
    rec = run_trajectory(initial_state(c), c, trajectory_seed(c.master_seed, 0))
    ens = run_ensemble(c).records[0]
    assert np.array_equal(rec.moments, ens.moments)


def test_records_are_normalized_states():
    c = cfg(n_traj=2, keep_final_state=True)
    for r in run_ensemble(c).records:
        assert r.final_state.norm == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.isfinite(r.moments))
        assert np.all(np.diff(r.jump_times) >= 0)


def test_failures_are_recorded_not_raised():
    res = run_ensemble(cfg(n_traj=2, max_norm_drift=1e-18, t_final=0.01))
    assert len(res.failures) == 2 and len(res.records) == 0
    idx, seed, t, msg = res.failures[0]
    assert "norm drift" in msg


def test_post_jump_relaxation():
    c = cfg(n_traj=1, t_final=1.0, record_stride=5, kappa=10.0)
    rec = run_ensemble(c).records[0]
    flags = post_jump_relaxation(rec, pointer_fixed_point(10.0).var_p_ps)
    assert len(flags) == len(rec.jump_times) and flags.dtype == bool
