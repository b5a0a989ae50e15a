"""Reduced weight dynamics of superpositions of separated wave packets.

Packets are described by their moments only.  Between jumps the weights
follow dw_j = w_j (r - r_j) dt; a jump maps w_j -> w_j r_j / r, where
r_j = <J^dag J>_j is evaluated with the composite means of the whole state.
Packet shapes stay frozen; means follow the damped drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import stats

from .gaussian import pointer_fixed_point
from .model import DomainError, Moments

ABSORB_EPS = 1e-6


class NoJumpError(DomainError):
    """Jump requested for a state whose jump rate is not positive."""


class WeightIntegrationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PacketEnsemble:
    """Per-packet moments (J, 5) with columns (x, p, V_x, V_p, C_xp) and weights (J,)."""

    moments: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.moments, float))
        w = np.asarray(self.weights, float).ravel()
        if m.shape != (len(w), 5):
            raise DomainError("moments must have shape (len(weights), 5)")
        if np.any(w < 0):
            raise DomainError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {w.sum():.15g}, not 1")
        object.__setattr__(self, "moments", m)
        object.__setattr__(self, "weights", w)

    @classmethod
    def pointer_packets(cls, kappa, weights, means) -> "PacketEnsemble":
        """Pointer-shaped packets at phase-space points ``means`` [(x, p), ...]."""
        ps = pointer_fixed_point(kappa)
        rows = [(x, p, ps.var_x_ps, ps.var_p_ps, ps.cov_xp_ps) for x, p in means]
        w = np.asarray(weights, float)
        return cls(np.array(rows), w / w.sum())

    def separation(self, kappa) -> float:
        """min over pairs of 2 k^2 dx^2 + dp^2 / 8 (inf for a single packet)."""
        x, p = self.moments[:, 0], self.moments[:, 1]
        J = len(x)
        if J < 2:
            return math.inf
        dx = x[:, None] - x[None, :]
        dp = p[:, None] - p[None, :]
        s = 2.0 * kappa**2 * dx * dx + dp * dp / 8.0
        return float(s[~np.eye(J, dtype=bool)].min())

    def is_separated(self, kappa, threshold=50.0) -> bool:
        return self.separation(kappa) > threshold


def composite_moments(ens: PacketEnsemble) -> Moments:
    w = ens.weights
    x, p, vx, vp, c = ens.moments.T
    dx = x[:, None] - x[None, :]
    dp = p[:, None] - p[None, :]
    ww = w[:, None] * w[None, :]
    return Moments(
        float(w @ x),
        float(w @ p),
        float(w @ vx + 0.5 * np.sum(ww * dx * dx)),
        float(w @ vp + 0.5 * np.sum(ww * dp * dp)),
        # C_xp is twice the covariance, so the cross term carries no 1/2
        float(w @ c + np.sum(ww * dx * dp)),
    )


def packet_rates(ens: PacketEnsemble, kappa):
    """(r, r_j): total jump rate and the per-packet norms <J^dag J>_j."""
    m = composite_moments(ens)
    x, p, vx, vp, _ = ens.moments.T
    rj = 2.0 * kappa**2 * (vx + (m.mean_x - x) ** 2) + (vp + (m.mean_p - p) ** 2) / 8.0 - 0.5
    r = 2.0 * kappa**2 * m.var_x + m.var_p / 8.0 - 0.5
    return r, rj


def weight_flow(ens: PacketEnsemble, kappa) -> np.ndarray:
    """dw_j/dt = w_j (r - r_j)."""
    r, rj = packet_rates(ens, kappa)
    return ens.weights * (r - rj)


def jump_reshuffle(ens: PacketEnsemble, kappa) -> PacketEnsemble:
    r, rj = packet_rates(ens, kappa)
    if not r > 0:
        raise NoJumpError(f"jump rate {r:.3g} <= 0")
    w = ens.weights * rj / r
    return replace(ens, weights=w / w.sum())


def expected_increment(ens: PacketEnsemble, kappa, dt) -> np.ndarray:
    """E[dw] over one step: drift + (jump with probability r dt); zero up to rounding."""
    r, rj = packet_rates(ens, kappa)
    w = ens.weights
    return w * (r - rj) * dt + w * (rj / r - 1.0) * r * dt


@dataclass
class WeightRun:
    times: np.ndarray
    weights: np.ndarray          # (len(times), J)
    survivor: Optional[int]      # None if not absorbed by t_final
    absorption_time: Optional[float]
    n_jumps: int


def default_weight_dt(ens: PacketEnsemble, kappa, factor=0.01) -> float:
    x, p = ens.moments[:, 0], ens.moments[:, 1]
    scale = 2.0 * kappa**2 * np.ptp(x) ** 2 + np.ptp(p) ** 2 / 8.0
    r, _ = packet_rates(ens, kappa)
    return factor / max(scale, r, 1.0)


def _advance_means(m, dt):
    out = m.copy()
    out[:, 0] += m[:, 1] * -math.expm1(-dt)
    out[:, 1] *= math.exp(-dt)
    return out


def run_weight_process(ens0: PacketEnsemble, kappa, t_final, dt=None, seed=0,
                       eps_abs=ABSORB_EPS, record_stride=1) -> WeightRun:
    """One realization of the stochastic weight process (Euler drift, exponential-clock jumps)."""
    res = run_weight_ensemble(ens0, kappa, t_final, dt, seeds=[seed], eps_abs=eps_abs,
                              record_stride=record_stride, keep_paths=True)
    return res[0]


def run_weight_ensemble(ens0: PacketEnsemble, kappa, t_final, dt=None, seeds=(0,),
                        eps_abs=ABSORB_EPS, record_stride=1, keep_paths=False):
    """Independent realizations, vectorized over runs; one RNG stream per seed."""
    dt = default_weight_dt(ens0, kappa) if dt is None else float(dt)
    if not dt > 0:
        raise DomainError("dt must be positive")
    n_steps = int(math.ceil(t_final / dt - 1e-9))
    R, J = len(seeds), len(ens0.weights)
    k2 = kappa**2
    rngs = [np.random.default_rng(s) for s in seeds]
    target = np.array([-math.log(1.0 - g.random()) for g in rngs])
    hazard = np.zeros(R)
    w = np.repeat(ens0.weights[None, :], R, axis=0)
    m = ens0.moments.copy()
    vx, vp = m[:, 2], m[:, 3]
    n_jumps = np.zeros(R, dtype=int)
    done = w.max(axis=1) > 1.0 - eps_abs
    absorbed_at = np.where(done, 0.0, np.nan)
    paths = [w.copy()] if keep_paths else None
    times = [0.0]

    def rates(w, m):
        x, p = m[:, 0], m[:, 1]
        mx = w @ x
        mp = w @ p
        rj = 2.0 * k2 * (vx + (mx[:, None] - x) ** 2) + (vp + (mp[:, None] - p) ** 2) / 8.0 - 0.5
        r = np.sum(w * rj, axis=1)
        return r, rj

    r_old, rj = rates(w, m)
    t_end = 0.0
    for i in range(1, n_steps + 1):
        live = ~done
        if not live.any():
            break
        t_end = i * dt
        w_new = w + dt * w * (r_old[:, None] - rj)
        if np.any(w_new[live] < -1e-9) or np.any(w_new[live] > 1.0 + 1e-9):
            raise WeightIntegrationError(f"weights left [0, 1] at step {i}; reduce dt (dt={dt:.3g})")
        w_new = np.clip(w_new, 0.0, None)
        w_new /= w_new.sum(axis=1, keepdims=True)
        w = np.where(live[:, None], w_new, w)
        m = _advance_means(m, dt)
        r_new, rj = rates(w, m)
        hazard[live] += 0.5 * (r_old[live] + r_new[live]) * dt
        for b in np.flatnonzero(live & (hazard >= target)):
            if r_new[b] > 0:
                wb = w[b] * rj[b] / r_new[b]
                w[b] = wb / wb.sum()
                n_jumps[b] += 1
            hazard[b] = 0.0
            target[b] = -math.log(1.0 - rngs[b].random())
        r_old, rj = rates(w, m)
        newly = live & (w.max(axis=1) > 1.0 - eps_abs)
        absorbed_at[newly] = i * dt
        done |= newly
        if keep_paths and (i % record_stride == 0 or i == n_steps or not (~done).any()):
            paths.append(w.copy())
            times.append(i * dt)
    out = []
    for b in range(R):
        surv = int(np.argmax(w[b])) if done[b] else None
        t_abs = float(absorbed_at[b]) if done[b] else None
        if keep_paths:
            tt, wp = np.array(times), np.array([pw[b] for pw in paths])
        else:
            tt, wp = np.array([t_end]), w[b][None, :].copy()
        out.append(WeightRun(tt, wp, surv, t_abs, int(n_jumps[b])))
    return out


@dataclass(frozen=True)
class BornSummary:
    counts: np.ndarray
    frequencies: np.ndarray
    expected: np.ndarray
    chi2: float
    p_value: float
    n_unabsorbed: int
    absorption_times: np.ndarray


def born_summary(runs, w0) -> BornSummary:
    w0 = np.asarray(w0, float)
    surv = [r.survivor for r in runs if r.survivor is not None]
    counts = np.bincount(np.array(surv, dtype=int), minlength=len(w0))
    n = counts.sum()
    exp = w0 * n
    keep = exp > 0
    if keep.sum() >= 2 and n > 0:
        chi2, pval = stats.chisquare(counts[keep], exp[keep])
    else:
        chi2, pval = 0.0, 1.0
    return BornSummary(counts, counts / max(n, 1), w0, float(chi2), float(pval),
                       len(runs) - int(n),
                       np.array([r.absorption_time for r in runs if r.absorption_time is not None]))
