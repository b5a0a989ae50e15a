"""Direct density-matrix integration of the QBM Lindblad master equation.

d rho/dt = -i k/2 [p^2, rho] - i k/2 [x, {p, rho}] - k^2 [x, [x, rho]] - 1/16 [p, [p, rho]]

Coarse grids only (rho is n x n).  Matrices use the discrete orthonormal
basis, so ``trace(rho) == 1`` and ``rho = v v^dagger`` with v = psi sqrt(dx).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridState
from .model import DomainError

MAX_ME_POINTS = 256


class AlignmentError(ValueError):
    """Grids or sample times of the compared objects do not match."""


class PositivityError(ArithmeticError):
    pass


@dataclass
class DensityMatrix:
    grid: Grid
    rho: np.ndarray
    kappa: float
    time: float = 0.0

    def __post_init__(self):
        n = self.grid.n_points
        if n > MAX_ME_POINTS:
            raise DomainError(f"density matrices are limited to n <= {MAX_ME_POINTS} points")
        self.rho = np.asarray(self.rho, dtype=np.complex128)
        if self.rho.shape != (n, n):
            raise DomainError("rho shape does not match grid")

    @classmethod
    def from_state(cls, state: GridState) -> "DensityMatrix":
        v = state.psi * math.sqrt(state.grid.dx)
        return cls(state.grid, np.outer(v, v.conj()), state.kappa, state.time)

    @classmethod
    def from_states(cls, states, weights=None) -> "DensityMatrix":
        """Mixture (1/N) sum |psi_i><psi_i| (or weighted) over states on one grid."""
        states = list(states)
        g = states[0].grid
        for s in states:
            if not s.grid.same_lattice(g):
                raise AlignmentError("all states must live on the same grid")
        V = np.array([s.psi for s in states]) * math.sqrt(g.dx)
        w = np.full(len(states), 1.0 / len(states)) if weights is None else np.asarray(weights, float)
        rho = (V.T * w) @ V.conj()
        return cls(g, rho, states[0].kappa, states[0].time)

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def purity(self) -> float:
        return float(np.vdot(self.rho, self.rho).real)

    def hermiticity_error(self) -> float:
        return float(np.abs(self.rho - self.rho.conj().T).max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def momentum_rep(self):
        return np.fft.ifft(np.fft.fft(self.rho, axis=0, norm="ortho"), axis=1, norm="ortho")

    def expectations(self):
        """(<x>, <p>, <x^2>, <p^2>, <{x,p}>/2) of the mixed state."""
        g = self.grid
        x = g.x
        p = g.momenta(self.kappa)
        px = np.diag(self.rho).real
        pp = np.diag(self.momentum_rep()).real
        # <{x,p}>/2 = Re Tr(x p rho); p acts on the row index spectrally
        p_rho = np.fft.ifft(p[:, None] * np.fft.fft(self.rho, axis=0), axis=0)
        xp = float(np.sum(x * np.diag(p_rho)).real)
        return (float(px @ x), float(pp @ p), float(px @ x**2), float(pp @ p**2), xp)


def _position_dissipator(grid, kappa, h):
    x = grid.x
    d = x[:, None] - x[None, :]
    return np.exp(-(kappa**2) * d * d * h)


def _momentum_factor(grid, kappa, h):
    p = grid.momenta(kappa)
    pi, pj = p[:, None], p[None, :]
    return np.exp(h * (-0.5j * kappa * (pi * pi - pj * pj) - (pi - pj) ** 2 / 16.0))


class MEIntegrator:
    """Strang-split stepper: position dissipator, momentum factor, friction (RK4)."""

    def __init__(self, grid: Grid, kappa, dt, friction_substeps=None, positivity_every=50,
                 positivity_tol=1e-6):
        if grid.n_points > MAX_ME_POINTS:
            raise DomainError(f"n_points > {MAX_ME_POINTS} is not supported by the oracle")
        self.grid, self.kappa, self.dt = grid, float(kappa), float(dt)
        x = grid.x
        self._dxx = x[:, None] - x[None, :]
        self._ik = 1j * grid.wavenumbers
        self._pos_half = _position_dissipator(grid, kappa, 0.5 * dt)
        self._mom_half = _momentum_factor(grid, kappa, 0.5 * dt)
        # explicit RK4 on the friction term is stable for h * max|eig| < 2.8
        lam = 0.5 * grid.length * np.abs(grid.wavenumbers).max() * 2.0
        need = int(math.ceil(dt * lam / 1.5))
        self.substeps = max(1, need if friction_substeps is None else friction_substeps)
        self.positivity_every = positivity_every
        self.positivity_tol = positivity_tol
        self._count = 0

    def _friction(self, rho):
        # -(1/2)(x - x')(d/dx - d/dx') rho
        dr = np.fft.ifft(self._ik[:, None] * np.fft.fft(rho, axis=0), axis=0)
        dc = np.fft.ifft(self._ik[None, :] * np.fft.fft(rho, axis=1), axis=1)
        return -0.5 * self._dxx * (dr - dc)

    def _mom(self, rho):
        rp = np.fft.ifft(np.fft.fft(rho, axis=0, norm="ortho"), axis=1, norm="ortho")
        rp *= self._mom_half
        return np.fft.fft(np.fft.ifft(rp, axis=0, norm="ortho"), axis=1, norm="ortho")

    def step(self, rho: np.ndarray) -> np.ndarray:
        r = rho * self._pos_half
        r = self._mom(r)
        h = self.dt / self.substeps
        f = self._friction
        for _ in range(self.substeps):
            k1 = f(r)
            k2 = f(r + 0.5 * h * k1)
            k3 = f(r + 0.5 * h * k2)
            k4 = f(r + h * k3)
            r = r + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        r = self._mom(r)
        r = r * self._pos_half
        r = 0.5 * (r + r.conj().T)
        tr = np.trace(r).real
        if abs(tr - 1.0) > 1e-8:
            warnings.warn(f"trace drift {tr - 1.0:.2e} in master-equation step", RuntimeWarning, stacklevel=2)
        r /= tr
        self._count += 1
        if self.positivity_every and self._count % self.positivity_every == 0:
            lo = np.linalg.eigvalsh(r)[0]
            if lo < -self.positivity_tol:
                raise PositivityError(f"density matrix eigenvalue {lo:.2e} < -{self.positivity_tol:g}; reduce dt")
        return r


def me_step(rho: DensityMatrix, kappa: float, dt: float) -> DensityMatrix:
    integ = MEIntegrator(rho.grid, kappa, dt, positivity_every=1)
    return DensityMatrix(rho.grid, integ.step(rho.rho), kappa, rho.time + dt)


def me_evolve(rho: DensityMatrix, kappa, t_final, dt, record_every=None):
    """Integrate to ``t_final``; returns (final DensityMatrix, times, expectation rows)."""
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise DomainError("t_final must be an integer multiple of dt")
    integ = MEIntegrator(rho.grid, kappa, dt)
    r = rho.rho.copy()
    times, obs = [rho.time], [rho.expectations()]
    for i in range(1, n + 1):
        r = integ.step(r)
        if record_every and (i % record_every == 0 or i == n):
            times.append(rho.time + i * dt)
            obs.append(DensityMatrix(rho.grid, r, kappa).expectations())
    out = DensityMatrix(rho.grid, r, kappa, rho.time + n * dt)
    return out, np.array(times), np.array(obs)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


def compare_ensemble(states, rho_t: DensityMatrix) -> float:
    """Trace distance between the trajectory mixture and a master-equation state."""
    states = list(states)
    for s in states:
        if not s.grid.same_lattice(rho_t.grid):
            raise AlignmentError("trajectory grid does not match the density-matrix grid")
        if abs(s.time - rho_t.time) > 1e-9 * max(1.0, abs(rho_t.time)):
            raise AlignmentError(f"state time {s.time} differs from density-matrix time {rho_t.time}")
    mc = DensityMatrix.from_states(states)
    return trace_distance(mc.rho, rho_t.rho)
