"""Gaussian pointer states: moment ODEs, fixed point, stability, wavefunctions."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import DomainError, Moments


class ResolutionError(ValueError):
    """The grid does not resolve the requested wave packet."""


class MomentIntegrationError(ArithmeticError):
    """Integration left the domain of the moment equations (V_x <= 0)."""


@dataclass(frozen=True)
class PointerStateSpec:
    kappa: float
    var_x_ps: float
    var_p_ps: float
    cov_xp_ps: float
    phase: float = 0.0

    def moments(self, mean_x=0.0, mean_p=0.0) -> Moments:
        return Moments(mean_x, mean_p, self.var_x_ps, self.var_p_ps, self.cov_xp_ps)


def _check_kappa(kappa):
    if not (kappa > 0 and math.isfinite(kappa)):
        raise DomainError(f"kappa must be positive and finite, got {kappa!r}")


def pointer_fixed_point(kappa: float) -> PointerStateSpec:
    """Stationary widths of the Gaussian pointer state.

    The closed forms are rearranged so that they neither overflow for huge
    kappa nor lose digits to cancellation for small kappa.
    """
    _check_kappa(kappa)
    k2 = kappa * kappa
    s = math.sqrt(16.0 * k2 + 1.0)
    # sqrt(1 + (64 k^2 + 1) s), factored by kappa^(3/2)
    k32 = kappa**1.5
    root = k32 * math.sqrt(1.0 / kappa**3 + (64.0 + 1.0 / k2) * (s / kappa))
    var_x = (1.0 + root) / (8.0 * k2 * s)
    s_minus_1 = 16.0 * k2 / (s + 1.0)
    cov = (4.0 * kappa - math.sqrt(s_minus_1)) / (kappa * s)
    var_p = (1.0 / k2 + cov * cov) / (4.0 * var_x)
    return PointerStateSpec(kappa=kappa, var_x_ps=var_x, var_p_ps=var_p, cov_xp_ps=cov)


def pointer_asymptotic(kappa: float) -> PointerStateSpec:
    """Leading-order large-kappa widths: 1/(2 k^1.5), 1/k^0.5, 1/k."""
    _check_kappa(kappa)
    return PointerStateSpec(kappa, 0.5 * kappa**-1.5, kappa**-0.5, 1.0 / kappa)


def variance_rhs(var_x, cov_xp, kappa):
    """(dV_x/dt, dC_xp/dt) of the Gaussian ansatz; vectorizes over arrays."""
    k2 = kappa * kappa
    dvx = cov_xp - var_x * (4.0 * k2 * var_x - 1.0) + (1.0 - k2 * cov_xp**2) / (16.0 * k2)
    dcov = (1.0 + k2 * cov_xp**2) / (16.0 * k2) * (8.0 - cov_xp) / var_x - 4.0 * k2 * cov_xp * var_x
    return dvx, dcov


def gaussian_var_p(var_x, cov_xp, kappa):
    return (1.0 / kappa**2 + cov_xp**2) / (4.0 * var_x)


def moment_ode_rhs(m: Moments, kappa: float, rtol: float = 1e-6) -> Moments:
    """Time derivatives of all five moments; dV_p/dt follows from 4 V_x V_p = 1/k^2 + C^2."""
    _check_kappa(kappa)
    if not m.var_x > 0:
        raise DomainError(f"var_x must be positive, got {m.var_x!r}")
    excess = m.uncertainty_excess(kappa)
    if abs(excess) > rtol * (1.0 / kappa**2 + m.cov_xp**2):
        warnings.warn(
            f"moments are not on the Gaussian manifold (excess {excess:.3g}); "
            "moment equations assume a Gaussian state",
            RuntimeWarning,
            stacklevel=2,
        )
    dvx, dcov = variance_rhs(m.var_x, m.cov_xp, kappa)
    var_p = gaussian_var_p(m.var_x, m.cov_xp, kappa)
    dvp = (0.5 * m.cov_xp * dcov - dvx * var_p) / m.var_x
    return Moments(m.mean_p, -m.mean_p, dvx, dvp, dcov)


@dataclass(frozen=True)
class MomentSeries:
    """Moments sampled at times ``t``; ``values`` columns are (x, p, V_x, V_p, C_xp)."""

    t: np.ndarray
    values: np.ndarray

    @property
    def mean_x(self):
        return self.values[:, 0]

    @property
    def mean_p(self):
        return self.values[:, 1]

    @property
    def var_x(self):
        return self.values[:, 2]

    @property
    def var_p(self):
        return self.values[:, 3]

    @property
    def cov_xp(self):
        return self.values[:, 4]

    def at(self, i) -> Moments:
        return Moments(*map(float, self.values[i]))


def _rk4_rhs(y, kappa):
    x, p, vx, c = y
    dvx, dc = variance_rhs(vx, c, kappa)
    return np.array([p, -p, dvx, dc])


def integrate_moments(m0: Moments, kappa: float, t_final: float, dt: float) -> MomentSeries:
    """Classical RK4 at fixed step ``dt`` (the last step is shortened to hit ``t_final``)."""
    _check_kappa(kappa)
    if not dt > 0:
        raise DomainError("dt must be positive")
    if t_final < 0:
        raise DomainError("t_final must be non-negative")
    if not m0.var_x > 0:
        raise DomainError("initial var_x must be positive")
    n = int(math.ceil(t_final / dt - 1e-9))
    t = np.minimum(np.arange(n + 1) * dt, t_final)
    out = np.empty((n + 1, 4))
    y = np.array([m0.mean_x, m0.mean_p, m0.var_x, m0.cov_xp], dtype=float)
    out[0] = y
    for i in range(n):
        h = t[i + 1] - t[i]
        k1 = _rk4_rhs(y, kappa)
        k2 = _rk4_rhs(y + 0.5 * h * k1, kappa)
        k3 = _rk4_rhs(y + 0.5 * h * k2, kappa)
        k4 = _rk4_rhs(y + h * k3, kappa)
        y_new = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not (y_new[2] > 0 and np.all(np.isfinite(y_new))):
            raise MomentIntegrationError(
                f"step {i} (t={t[i]:.6g}, dt={h:.3g}) drives V_x to {y_new[2]:.6g}; reduce dt"
            )
        y = y_new
        out[i + 1] = y
    vp = gaussian_var_p(out[:, 2], out[:, 3], kappa)
    values = np.column_stack([out[:, 0], out[:, 1], out[:, 2], vp, out[:, 3]])
    return MomentSeries(t=t, values=values)


def variance_jacobian(var_x, cov_xp, kappa) -> np.ndarray:
    k2 = kappa * kappa
    q = 1.0 + k2 * cov_xp**2
    d_vx = np.array([1.0 - 8.0 * k2 * var_x, 1.0 - cov_xp / 8.0])
    d_c = np.array([
        -q * (8.0 - cov_xp) / (16.0 * k2 * var_x**2) - 4.0 * k2 * cov_xp,
        (2.0 * k2 * cov_xp * (8.0 - cov_xp) - q) / (16.0 * k2 * var_x) - 4.0 * k2 * var_x,
    ])
    return np.vstack([d_vx, d_c])


def stability_eigenvalues(kappa: float) -> np.ndarray:
    """Eigenvalues of the (V_x, C_xp) Jacobian at the pointer fixed point."""
    ps = pointer_fixed_point(kappa)
    return np.linalg.eigvals(variance_jacobian(ps.var_x_ps, ps.cov_xp_ps, kappa))


def gaussian_amplitudes(x, kappa, mean_x, mean_p, var_x, cov_xp, phase=0.0):
    """Normalized Gaussian with the given moments, evaluated at positions ``x``."""
    d = x - mean_x
    expo = -(d * d) / (4.0 * var_x) * (1.0 - 1j * kappa * cov_xp) + 1j * kappa * d * mean_p + 1j * phase
    return (2.0 * math.pi * var_x) ** -0.25 * np.exp(expo)


def pointer_wavefunction(spec: PointerStateSpec, mean_x: float, mean_p: float, grid,
                         min_points_per_sigma: float = 16.0, n_sigma: float = 6.0):
    """Discretized pointer state on ``grid`` (phase fixed to zero)."""
    return gaussian_state(grid, spec.kappa, mean_x, mean_p, spec.var_x_ps, spec.cov_xp_ps,
                          min_points_per_sigma=min_points_per_sigma, n_sigma=n_sigma)


def gaussian_state(grid, kappa, mean_x, mean_p, var_x, cov_xp,
                   min_points_per_sigma: float = 16.0, n_sigma: float = 6.0):
    from .grid import GridState

    sigma = math.sqrt(var_x)
    if sigma / grid.dx < min_points_per_sigma:
        raise ResolutionError(
            f"grid spacing {grid.dx:.3g} gives {sigma / grid.dx:.2f} points per standard "
            f"deviation, need {min_points_per_sigma}"
        )
    if mean_x - n_sigma * sigma < grid.x_min or mean_x + n_sigma * sigma > grid.x_max:
        raise ResolutionError(f"grid [{grid.x_min}, {grid.x_max}) does not contain x = {mean_x} +- {n_sigma} sigma")
    psi = gaussian_amplitudes(grid.x, kappa, mean_x, mean_p, var_x, cov_xp)
    return GridState(grid, psi, kappa).normalized()
