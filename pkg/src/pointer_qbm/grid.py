"""Wavefunctions on a periodic grid and the split-step NLPSE propagator.

Units follow the dimensionless convention: [x, p] = i/kappa, so the
momentum grid is p = k / kappa for FFT wavenumbers k.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .model import DomainError, Moments


class StepSizeError(ArithmeticError):
    """Per-step norm drift exceeded the configured bound."""


class NumericalBreakdown(ArithmeticError):
    """NaN or inf appeared in the wavefunction."""


class DegenerateJumpError(ArithmeticError):
    pass


class LeakageWarning(RuntimeWarning):
    """Amplitude at the periodic boundary is not negligible."""


LEAKAGE_TOL = 1e-8
DISCARD_TOL = 1e-12             # probability dropped by a recentering shift


@dataclass(frozen=True)
class Grid:
    n_points: int
    x_min: float
    x_max: float

    def __post_init__(self):
        n = self.n_points
        if n < 4 or n & (n - 1):
            raise DomainError(f"n_points must be a power of two >= 4, got {n}")
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")

    @classmethod
    def centered(cls, n_points, center, width):
        return cls(n_points, center - 0.5 * width, center + 0.5 * width)

    @classmethod
    def for_pointer(cls, kappa, n_points=1024, n_sigma=24.0, center=0.0):
        """Default grid: ``n_sigma`` pointer-state standard deviations wide."""
        from .gaussian import pointer_fixed_point

        sigma = math.sqrt(pointer_fixed_point(kappa).var_x_ps)
        return cls.centered(n_points, center, n_sigma * sigma)

    @property
    def length(self):
        return self.x_max - self.x_min

    @property
    def dx(self):
        return self.length / self.n_points

    @property
    def center(self):
        return 0.5 * (self.x_min + self.x_max)

    @property
    def x(self):
        return self.x_min + np.arange(self.n_points) * self.dx

    @property
    def wavenumbers(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, self.dx)

    def momenta(self, kappa):
        return self.wavenumbers / kappa

    def dp(self, kappa):
        return 2.0 * np.pi / (kappa * self.length)

    def shifted(self, n_shift: int) -> "Grid":
        d = n_shift * self.dx
        return Grid(self.n_points, self.x_min + d, self.x_max + d)

    def same_lattice(self, other: "Grid", tol=1e-12) -> bool:
        return (self.n_points == other.n_points
                and abs(self.x_min - other.x_min) <= tol * max(1.0, abs(self.length))
                and abs(self.x_max - other.x_max) <= tol * max(1.0, abs(self.length)))


@dataclass
class GridState:
    grid: Grid
    psi: np.ndarray
    kappa: float
    time: float = 0.0
    flags: set = field(default_factory=set)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.complex128)
        if self.psi.shape != (self.grid.n_points,):
            raise DomainError(f"amplitude shape {self.psi.shape} does not match grid")

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2) * self.grid.dx))

    def normalized(self) -> "GridState":
        return replace(self, psi=self.psi / self.norm, flags=set(self.flags))

    def leakage(self) -> float:
        a = np.abs(self.psi)
        return float(max(a[0], a[-1]) / a.max())

    def momentum_amplitudes(self):
        """Unitary-normalized momentum amplitudes, ordered like ``grid.momenta``."""
        g = self.grid
        return np.fft.fft(self.psi) * g.dx / math.sqrt(2.0 * np.pi / self.kappa)

    def apply_p(self, f=None):
        """(f(p) psi)(x) with p spectral; f defaults to the identity."""
        p = self.grid.momenta(self.kappa)
        return np.fft.ifft((p if f is None else f(p)) * np.fft.fft(self.psi))

    def overlap(self, other: "GridState") -> complex:
        return complex(np.vdot(self.psi, other.psi) * self.grid.dx)


# ---------------------------------------------------------------------------
# batched engine


class Propagator:
    """Split-step NLPSE integrator for a batch of wavefunctions on a common lattice.

    Rows may sit on shifted copies of the lattice (``x_min`` per row), which is
    how the moving window is realized.  Expectation values entering the
    nonlinear operator are frozen per pass; with ``corrector`` the step is
    redone with the average of start and predicted end moments.
    """

    def __init__(self, n_points, dx, kappa, dt, corrector=True, max_norm_drift=1e-6,
                 ordering="left"):
        if not dt > 0:
            raise DomainError("dt must be positive")
        if not kappa > 0:
            raise DomainError("kappa must be positive")
        self.n = int(n_points)
        self.dx = float(dx)
        self.kappa = float(kappa)
        self.dt = float(dt)
        self.corrector = corrector
        self.max_norm_drift = max_norm_drift
        if ordering not in ("left", "symmetric"):
            raise DomainError(f"unknown operator ordering {ordering!r}")
        self.ordering = ordering
        self._sym = 1.0 if ordering == "symmetric" else 0.0
        self.p = 2.0 * np.pi * np.fft.fftfreq(self.n, self.dx) / self.kappa
        self._scratch = _kernels.scratch(self.n)

    @classmethod
    def for_grid(cls, grid: Grid, kappa, dt, **kw):
        return cls(grid.n_points, grid.dx, kappa, dt, **kw)

    # -- primitives on (B, n) arrays ------------------------------------------
    def fft(self, psi):
        return np.fft.fft(psi, axis=-1)

    def ifft(self, phi):
        return np.fft.ifft(phi, axis=-1)

    def moments(self, psi, phi, x_min):
        out = np.empty((psi.shape[0], 6))
        ppsi = self.ifft(self.p * phi)
        _kernels.moments(psi, phi, ppsi, x_min, self.dx, self.p, out)
        return out

    def _pass(self, phi, x_min, m, h):
        fk = np.empty_like(phi)
        _kernels.momentum_factor(self.p, m, self.kappa, 0.5 * h, fk)
        psi = self.ifft(phi * fk)
        _kernels.real_space_block(psi, x_min, self.dx, m, self.kappa, h, self._sym, *self._scratch)
        phi = self.fft(psi)
        phi *= fk
        return self.ifft(phi), phi

    def step(self, psi, phi, x_min, m, h=None):
        """Advance one step from normalized ``psi`` with moments ``m``.

        Returns (psi, phi, moments, norm_drift); outputs are renormalized and
        ``moments`` refer to the new state.
        """
        h = self.dt if h is None else h
        psi1, phi1 = self._pass(phi, x_min, m, h)
        if self.corrector:
            m1 = self.moments(psi1, phi1, x_min)
            mid = 0.5 * (m + m1)
            psi1, phi1 = self._pass(phi, x_min, mid, h)
        m_new = self.moments(psi1, phi1, x_min)
        norm = m_new[:, 5]
        drift = np.abs(norm - 1.0)
        inv = (1.0 / norm)[:, None]
        psi1 *= inv
        phi1 *= inv
        m_new[:, 5] = 1.0
        return psi1, phi1, m_new, drift

    def step_refined(self, psi, phi, x_min, m, max_drift, max_halvings=4, h=None):
        """``step`` with per-row step halving while the norm drift exceeds ``max_drift``.

        Rows are refined independently, so results do not depend on batching.
        Returns (psi, phi, moments, drift) with ``drift`` the largest accepted
        sub-step drift of each row.
        """
        h = self.dt if h is None else h
        p1, f1, m1, d = self.step(psi, phi, x_min, m, h)
        if max_drift is None or max_halvings <= 0:
            return p1, f1, m1, d
        bad = np.flatnonzero(~(d <= max_drift))
        if len(bad) == 0:
            return p1, f1, m1, d
        xs = x_min[bad]
        pa, fa, ma, da = self.step_refined(psi[bad], phi[bad], xs, m[bad], max_drift,
                                           max_halvings - 1, 0.5 * h)
        pb, fb, mb, db = self.step_refined(pa, fa, xs, ma, max_drift, max_halvings - 1, 0.5 * h)
        p1[bad], f1[bad], m1[bad] = pb, fb, mb
        d[bad] = np.maximum(da, db)
        return p1, f1, m1, d

    def jump(self, psi, x_min, m):
        """Apply the normalized nonlinear jump operator to each row."""
        kappa = self.kappa
        x = x_min[:, None] + np.arange(self.n) * self.dx
        ppsi = self.ifft(self.p * self.fft(psi))
        jpsi = math.sqrt(2.0) * (kappa * (x - m[:, 0:1]) * psi + 0.25j * (ppsi - m[:, 1:2] * psi))
        nrm = np.sqrt(np.sum(np.abs(jpsi) ** 2, axis=-1) * self.dx)
        if np.any(nrm < 1e-12):
            raise DegenerateJumpError("jump operator annihilates the state (||J psi|| < 1e-12)")
        return jpsi / nrm[:, None]

    def leakage(self, psi):
        a = np.abs(psi)
        return np.maximum(a[:, 0], a[:, -1]) / a.max(axis=-1)

    def recenter(self, psi, phi, x_min, m):
        """Shift rows whose mean strays more than a quarter window from the center.

        Shifts are whole lattice cells; the amplitude wrapped around the
        periodic boundary is discarded and the row renormalized.  Returns the
        indices of shifted rows and the probability discarded from each.
        """
        L = self.n * self.dx
        center = x_min + 0.5 * L
        moved = np.flatnonzero(np.abs(m[:, 0] - center) > 0.25 * L)
        lost = np.zeros(len(moved))
        for i, b in enumerate(moved):
            s = int(round((m[b, 0] - center[b]) / self.dx))
            row = np.roll(psi[b], -s)
            cut = row[-s:] if s > 0 else row[:-s]
            lost[i] = np.sum(np.abs(cut) ** 2) * self.dx
            cut[:] = 0.0
            psi[b] = row / math.sqrt(1.0 - lost[i])
            x_min[b] += s * self.dx
        if len(moved):
            phi[moved] = self.fft(psi[moved])
        return moved, lost


def jump_rate_from_moments(m, kappa):
    """r = 2 k^2 V_x + V_p / 8 - 1/2 (array-valued, unclamped)."""
    return 2.0 * kappa**2 * m[..., 2] + m[..., 3] / 8.0 - 0.5


# ---------------------------------------------------------------------------
# single-state API


def _as_batch(state: GridState):
    return state.psi[None, :].copy(), np.array([state.grid.x_min])


def _moments_row(prop: Propagator, psi, x_min):
    phi = prop.fft(psi)
    return prop.moments(psi, phi, x_min)[0]


def measure_moments(state: GridState) -> Moments:
    """Moments of a normalized state (position quadrature, spectral momentum)."""
    g = state.grid
    prop = Propagator(g.n_points, g.dx, state.kappa, 1.0)
    psi, x_min = _as_batch(state)
    m = _moments_row(prop, psi, x_min)
    if state.leakage() > LEAKAGE_TOL:
        state.flags.add("leakage")
        warnings.warn(f"edge leakage {state.leakage():.2e}: measured moments may be tainted",
                      LeakageWarning, stacklevel=2)
    if abs(m[5] - 1.0) > 1e-6:
        warnings.warn(f"measuring an unnormalized state (norm {m[5]:.8f})", RuntimeWarning, stacklevel=2)
    return Moments(*map(float, m[:5]))


def nlpse_step(state: GridState, kappa: float, dt: float, corrector=True,
               max_norm_drift=1e-6, ordering="left") -> GridState:
    """One predictor-corrector Strang step of the nonlinear pointer-state equation."""
    g = state.grid
    prop = Propagator(g.n_points, g.dx, kappa, dt, corrector=corrector,
                      max_norm_drift=max_norm_drift, ordering=ordering)
    psi, x_min = _as_batch(state)
    phi = prop.fft(psi)
    m = prop.moments(psi, phi, x_min)
    psi, phi, m, drift = prop.step_refined(psi, phi, x_min, m, max_norm_drift)
    _check_step(psi, drift[0], max_norm_drift, dt, state.time)
    return GridState(g, psi[0], kappa, state.time + dt, set(state.flags))


def _check_step(psi, drift, max_drift, dt, t):
    if not np.all(np.isfinite(psi)):
        raise NumericalBreakdown(f"non-finite amplitude after step at t={t:.6g}")
    if max_drift is not None and drift > max_drift:
        raise StepSizeError(f"norm drift {drift:.3g} per step exceeds {max_drift:.1g} (dt={dt:.3g}, t={t:.6g})")


def evolve(state: GridState, kappa, t_final, dt, record_stride=1, corrector=True,
           max_norm_drift=1e-6, recenter=True, ordering="left"):
    """Deterministic NLPSE evolution; returns (times, moments array (m, 5), final state)."""
    g = state.grid
    prop = Propagator(g.n_points, g.dx, kappa, dt, corrector=corrector,
                      max_norm_drift=max_norm_drift, ordering=ordering)
    psi, x_min = _as_batch(state.normalized())
    phi = prop.fft(psi)
    m = prop.moments(psi, phi, x_min)
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise DomainError("t_final must be an integer multiple of dt")
    times, rows = [state.time], [m[0, :5].copy()]
    flags = set(state.flags)
    for i in range(1, n_steps + 1):
        psi, phi, m, drift = prop.step_refined(psi, phi, x_min, m, max_norm_drift)
        _check_step(psi, drift[0], max_norm_drift, dt, state.time + i * dt)
        if recenter and np.any(prop.recenter(psi, phi, x_min, m)[1] > DISCARD_TOL):
            flags.add("leakage")
        if i % record_stride == 0 or i == n_steps:
            times.append(state.time + i * dt)
            rows.append(m[0, :5].copy())
    final = GridState(Grid(g.n_points, float(x_min[0]), float(x_min[0]) + g.length), psi[0], kappa,
                      state.time + n_steps * dt, flags)
    if final.leakage() > LEAKAGE_TOL:
        final.flags.add("leakage")
    return np.array(times), np.array(rows), final


def jump_rate(state: GridState, kappa: float) -> float:
    """Jump rate from the moments; negative values are clamped to zero with a warning."""
    m = measure_moments(state)
    r = 2.0 * kappa**2 * m.var_x + m.var_p / 8.0 - 0.5
    if r < 0:
        warnings.warn(f"moment formula gives negative jump rate {r:.3g}; state is below the "
                      "minimum-uncertainty scale, clamping to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(r)


def jump_rate_operator(state: GridState, kappa: float) -> float:
    """<J^dagger J> by direct quadrature of ||J psi||^2."""
    g = state.grid
    m = measure_moments(state)
    jpsi = math.sqrt(2.0) * (kappa * (g.x - m.mean_x) * state.psi
                             + 0.25j * (state.apply_p() - m.mean_p * state.psi))
    return float(np.sum(np.abs(jpsi) ** 2) * g.dx)


def apply_jump(state: GridState, kappa: float) -> GridState:
    g = state.grid
    prop = Propagator(g.n_points, g.dx, kappa, 1.0)
    psi, x_min = _as_batch(state)
    m = _moments_row(prop, psi, x_min)[None, :]
    if jump_rate_from_moments(m[0], kappa) <= 0:
        raise DomainError("jump requested for a state with non-positive jump rate")
    out = prop.jump(psi, x_min, m)
    return GridState(g, out[0], kappa, state.time, set(state.flags))


def default_dt(kappa: float) -> float:
    from .jump_model import pointer_jump_rate

    return min(1e-4, 0.1 / pointer_jump_rate(kappa))


def purity_rate_check(state: GridState, kappa: float, dt: float):
    """Compare the jump rate with half the purity-loss rate under the master equation.

    Returns (rate from moments, rate from <J^dag J> quadrature, purity slope).
    """
    from .me_oracle import DensityMatrix, me_step

    rho0 = DensityMatrix.from_state(state)
    rho1 = me_step(rho0, kappa, dt)
    slope = 0.5 * ((1.0 - rho1.purity()) - (1.0 - rho0.purity())) / dt
    return jump_rate(state, kappa), jump_rate_operator(state, kappa), float(slope)
