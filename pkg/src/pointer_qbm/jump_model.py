"""Analytic semiclassical jump model for pointer-state trajectories.

A jump moves the pointer state in phase space by +-(j_x, j_p) at total
rate r_ps.  To second order the resulting process is a phase-space
diffusion with D_x = j_x^2 r, D_p = j_p^2 r, D_xp = j_x j_p r.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gaussian import pointer_fixed_point
from .model import DomainError, ModelParams


class ModelInvalidError(DomainError):
    """The pointer-state jump rate is not positive, so the jump model is undefined."""


@dataclass(frozen=True)
class JumpModelParams:
    kappa: float
    j_x: float
    j_p: float
    r_ps: float


@dataclass(frozen=True)
class DiffusionConstants:
    D_x: float
    D_p: float
    D_xp: float
    source: str = "analytic"          # "analytic" or "fitted"
    sigma_Dx: Optional[float] = None
    sigma_Dp: Optional[float] = None
    sigma_Dxp: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False)

    def as_tuple(self):
        return (self.D_x, self.D_p, self.D_xp)


def pointer_jump_rate(kappa: float) -> float:
    """r_ps = 2 k^2 V_x,ps + V_p,ps / 8 - 1/2."""
    ps = pointer_fixed_point(kappa)
    return 2.0 * kappa**2 * ps.var_x_ps + ps.var_p_ps / 8.0 - 0.5


def jump_model_params(kappa: float) -> JumpModelParams:
    ps = pointer_fixed_point(kappa)
    r = 2.0 * kappa**2 * ps.var_x_ps + ps.var_p_ps / 8.0 - 0.5
    if not r > 0:
        raise ModelInvalidError(f"pointer jump rate {r:.3g} <= 0 at kappa={kappa:g}")
    return JumpModelParams(kappa, math.sqrt(2.0 * ps.var_x_ps), math.sqrt(2.0 * ps.var_p_ps), r)


def analytic_diffusion(kappa: float) -> DiffusionConstants:
    jm = jump_model_params(kappa)
    r = jm.r_ps
    return DiffusionConstants(jm.j_x**2 * r, jm.j_p**2 * r, jm.j_x * jm.j_p * r, source="analytic")


def simulate_jump_sde(params: JumpModelParams, x0, p0, t_final, dt, seed, n_runs=1,
                      rate=None):
    """Sample the two-sided Poisson jump SDE on a uniform time grid.

    Jumps of +-(j_x, j_p) arrive at total rate ``rate`` (default r_ps) with
    a fair sign.  Jump epochs are drawn uniformly inside each step and the
    linear drift (p, -p) is applied exactly, so the sampled process is exact
    in distribution at the grid times.  Returns (t, x, p) with x, p of shape
    (n_runs, len(t)).
    """
    r = params.r_ps if rate is None else float(rate)
    if not dt > 0 or t_final < 0:
        raise DomainError("need dt > 0 and t_final >= 0")
    if r < 0:
        raise DomainError("jump rate must be non-negative")
    if r * dt > 0.05:
        raise DomainError(f"dt * rate = {r * dt:.3g} exceeds 0.05; reduce dt")
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise DomainError("t_final must be an integer multiple of dt")
    rng = np.random.default_rng(seed)
    t = np.arange(n + 1) * dt
    x = np.empty((n_runs, n + 1))
    p = np.empty((n_runs, n + 1))
    x[:, 0] = x0
    p[:, 0] = p0
    decay = math.exp(-dt)
    for i in range(n):
        xi = x[:, i] + p[:, i] * (1.0 - decay)
        pi = p[:, i] * decay
        counts = rng.poisson(r * dt, n_runs)
        total = int(counts.sum())
        if total:
            owner = np.repeat(np.arange(n_runs), counts)
            sign = rng.choice((-1.0, 1.0), total)
            rest = dt * (1.0 - rng.random(total))       # time left in the step after the jump
            e = np.exp(-rest)
            np.add.at(xi, owner, sign * (params.j_x + params.j_p * (1.0 - e)))
            np.add.at(pi, owner, sign * params.j_p * e)
        x[:, i + 1] = xi
        p[:, i + 1] = pi
    return t, x, p


@dataclass(frozen=True)
class LangevinLimit:
    """Reduced one-noise SDE dp = -p dt + sqrt(D_p) dW (dimensionless).

    ``D_p_limit`` is the semiclassical value 2; when physical inputs are
    given, ``drift_coefficient`` (-2 gamma) and ``noise_amplitude``
    (sqrt(4 gamma m k_B T)) are the dimensional coefficients of that limit,
    and ``noise_amplitude_finite`` uses the finite-kappa D_p instead.
    """

    kappa: float
    D_p: float
    drift: float = -1.0
    D_p_limit: float = 2.0
    drift_coefficient: Optional[float] = None
    noise_amplitude: Optional[float] = None
    noise_amplitude_finite: Optional[float] = None

    @property
    def noise(self) -> float:
        return math.sqrt(self.D_p)


def langevin_limit(kappa_or_params) -> LangevinLimit:
    if isinstance(kappa_or_params, ModelParams):
        params = kappa_or_params
    else:
        params = ModelParams(float(kappa_or_params))
    d = analytic_diffusion(params.kappa)
    phys = params.physical
    if phys is None:
        return LangevinLimit(params.kappa, d.D_p)
    g, thermal = phys.friction, phys.k_B * phys.temperature
    # dimensionless -> physical: p = P p~, t = T t~, dW~ = dW / sqrt(T)
    return LangevinLimit(
        params.kappa, d.D_p,
        drift_coefficient=-2.0 * g,
        noise_amplitude=math.sqrt(4.0 * g * phys.mass * thermal),
        noise_amplitude_finite=math.sqrt(2.0 * g * phys.mass * thermal * d.D_p),
    )
