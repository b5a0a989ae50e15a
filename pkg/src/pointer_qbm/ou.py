"""Phase-space Ornstein-Uhlenbeck process dx = p dt + ..., dp = -p dt + ... .

Closed-form second moments from zero initial spread, their ODEs, an
Euler-Maruyama sampler, and the finite-sample variance laws of the
sample mean / variance / covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .jump_model import DiffusionConstants
from .model import DomainError


class OUParameterError(DomainError):
    pass


@dataclass(frozen=True)
class OUParams:
    B: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        if B.shape != (2, 2):
            raise OUParameterError("B must be 2x2")
        object.__setattr__(self, "B", B)

    @property
    def D_x(self):
        return float(self.B[0, 0] ** 2 + self.B[0, 1] ** 2)

    @property
    def D_p(self):
        return float(self.B[1, 0] ** 2 + self.B[1, 1] ** 2)

    @property
    def D_xp(self):
        return float(self.B[0, 0] * self.B[1, 0] + self.B[0, 1] * self.B[1, 1])

    def diffusion(self) -> DiffusionConstants:
        return DiffusionConstants(self.D_x, self.D_p, self.D_xp, source="analytic")


def ou_from_diffusion(d: DiffusionConstants, tol=1e-12) -> OUParams:
    """Lower-triangular B with B B^T = [[D_x, D_xp], [D_xp, D_p]]."""
    Dx, Dp, Dxp = d.D_x, d.D_p, d.D_xp
    if Dx < 0 or Dp < 0:
        raise OUParameterError("diffusion constants D_x, D_p must be non-negative")
    gap = Dx * Dp - Dxp * Dxp
    if gap < -tol * max(1.0, Dx * Dp):
        raise OUParameterError(f"D_xp^2 = {Dxp * Dxp:.6g} exceeds D_x D_p = {Dx * Dp:.6g}")
    gap = max(gap, 0.0)
    if Dx > 0:
        b11 = math.sqrt(Dx)
        return OUParams(np.array([[b11, 0.0], [Dxp / b11, math.sqrt(gap / Dx)]]))
    if Dxp != 0.0:
        raise OUParameterError("D_x = 0 requires D_xp = 0")
    # transposed construction: noise enters through p only
    return OUParams(np.array([[0.0, 0.0], [0.0, math.sqrt(Dp)]]))


@dataclass(frozen=True)
class OUMoments:
    var_x: np.ndarray
    var_p: np.ndarray
    cov_xp: np.ndarray


def ou_moments(d: DiffusionConstants, t) -> OUMoments:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be non-negative")
    a = -np.expm1(-t)                   # 1 - e^{-t}
    var_p = -0.5 * d.D_p * np.expm1(-2.0 * t)
    cov = 0.5 * d.D_p * a * a + d.D_xp * a
    var_x = (d.D_x + d.D_p + 2.0 * d.D_xp) * t - 0.5 * d.D_p * a * a - (d.D_p + 2.0 * d.D_xp) * a
    return OUMoments(var_x, var_p, cov)


def ou_moment_ode_rhs(m, d: DiffusionConstants):
    """Derivatives of (Var[x], Var[p], Cov[x,p])."""
    vx, vp, c = m
    return (2.0 * c + d.D_x, -2.0 * vp + d.D_p, -c + vp + d.D_xp)


def simulate_ou(params: OUParams, x0, p0, t_final, dt=1e-3, seed=0, n_runs=1):
    """Euler-Maruyama; returns (t, x, p) with x, p of shape (n_runs, len(t))."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    n = int(round(t_final / dt))
    if n < 0 or abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise DomainError("t_final must be a non-negative integer multiple of dt")
    rng = np.random.default_rng(seed)
    B = params.B
    t = np.arange(n + 1) * dt
    x = np.empty((n_runs, n + 1))
    p = np.empty((n_runs, n + 1))
    x[:, 0] = x0
    p[:, 0] = p0
    sq = math.sqrt(dt)
    for i in range(n):
        dW = rng.standard_normal((2, n_runs)) * sq
        x[:, i + 1] = x[:, i] + p[:, i] * dt + B[0, 0] * dW[0] + B[0, 1] * dW[1]
        p[:, i + 1] = p[:, i] - p[:, i] * dt + B[1, 0] * dW[0] + B[1, 1] * dW[1]
    return t, x, p


@dataclass(frozen=True)
class FiniteSampleLaws:
    """Predicted variances of the finite-sample statistics at one or more times."""

    var_mean_x: np.ndarray
    var_mean_p: np.ndarray
    var_var_x: np.ndarray
    var_var_p: np.ndarray
    var_cov_xp: np.ndarray


def finite_sample_laws(d: DiffusionConstants, t, N) -> FiniteSampleLaws:
    if N < 2:
        raise DomainError("finite-sample laws need N >= 2")
    m = ou_moments(d, t)
    return FiniteSampleLaws(
        var_mean_x=m.var_x / N,
        var_mean_p=m.var_p / N,
        var_var_x=2.0 * m.var_x**2 / (N - 1),
        var_var_p=2.0 * m.var_p**2 / (N - 1),
        var_cov_xp=(m.var_x * m.var_p + m.cov_xp**2) / (N - 1),
    )
