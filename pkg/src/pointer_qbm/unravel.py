"""Piecewise-deterministic pointer-state unraveling: NLPSE flow plus Poisson jumps."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .gaussian import ResolutionError, gaussian_amplitudes, gaussian_state, pointer_fixed_point
from .grid import (DISCARD_TOL, LEAKAGE_TOL, Grid, GridState, Propagator, jump_rate_from_moments)
from .model import DomainError

log = logging.getLogger(__name__)

RateOverride = Union[float, Callable[[float, np.ndarray], np.ndarray], None]


@dataclass
class EnsembleConfig:
    kappa: float
    n_traj: int = 1
    master_seed: int = 0
    t_final: float = 1.0
    dt: Optional[float] = None
    record_stride: int = 1
    init: str = "pointer"
    n_points: int = 1024
    width: Optional[float] = None     # grid width; default 24 pointer standard deviations
    center: float = 0.0
    corrector: bool = True
    recenter: bool = True
    jump_scheme: str = "clock"        # or "bernoulli"
    max_norm_drift: float = 1e-6
    ordering: str = "left"
    asymmetry: float = 1e-3           # seeded symmetry-breaking admixture of the initial state
    keep_final_state: bool = False
    batch_size: int = 64
    threads: int = 1
    min_points_per_sigma: float = 16.0
    rate_override: RateOverride = field(default=None, repr=False)

    def __post_init__(self):
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")
        if self.n_traj < 1:
            raise DomainError("n_traj must be >= 1")
        if self.record_stride < 1:
            raise DomainError("record_stride must be >= 1")
        if self.t_final < 0:
            raise DomainError("t_final must be non-negative")
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.jump_scheme not in ("clock", "bernoulli"):
            raise DomainError(f"unknown jump scheme {self.jump_scheme!r}")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")

    @property
    def step(self) -> float:
        if self.dt is not None:
            return self.dt
        from .grid import default_dt

        return default_dt(self.kappa)

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_final / self.step))
        if abs(n * self.step - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise DomainError("t_final must be an integer multiple of dt")
        return n

    def grid(self) -> Grid:
        if self.width is None:
            return Grid.for_pointer(self.kappa, self.n_points, center=self.center)
        return Grid.centered(self.n_points, self.center, self.width)


@dataclass
class TrajectoryRecord:
    index: int
    seed: int
    times: np.ndarray
    moments: np.ndarray          # (len(times), 5): x, p, V_x, V_p, C_xp
    jump_times: np.ndarray
    final_state: Optional[GridState] = None
    flags: set = field(default_factory=set)

    def __post_init__(self):
        if len(self.moments) != len(self.times):
            raise ValueError("moments and times differ in length")

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


@dataclass
class EnsembleResult:
    records: list
    failures: list               # (index, seed, time, message)
    config: EnsembleConfig

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def trajectory_seed(master_seed: int, index: int) -> int:
    """Counter-based per-trajectory seed: SeedSequence(master, spawn_key=(i,))."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# initial states


def initial_state(cfg: EnsembleConfig, grid: Optional[Grid] = None) -> GridState:
    """Build the initial state named by ``cfg.init``.

    Descriptors: ``pointer`` or ``pointer:x,p``; ``gauss:vx,vp,cxp`` (vp must
    satisfy the Gaussian relation); ``superpos:<json file>`` with a list of
    packets ``{"w":..,"x":..,"p":..}`` (optional ``vx``/``cxp``, pointer shape by default).
    """
    g = cfg.grid() if grid is None else grid
    k = cfg.kappa
    ps = pointer_fixed_point(k)
    kind, _, arg = cfg.init.partition(":")
    mpps = cfg.min_points_per_sigma
    if kind == "pointer":
        x0, p0 = (float(v) for v in arg.split(",")) if arg else (cfg.center, 0.0)
        return gaussian_state(g, k, x0, p0, ps.var_x_ps, ps.cov_xp_ps, min_points_per_sigma=mpps)
    if kind == "gauss":
        vx, vp, c = (float(v) for v in arg.split(","))
        expect = (1.0 / k**2 + c * c) / (4.0 * vx)
        if abs(vp - expect) > 1e-6 * expect:
            raise DomainError(f"gauss: V_p={vp} inconsistent with a Gaussian (expected {expect:.10g})")
        return gaussian_state(g, k, cfg.center, 0.0, vx, c, min_points_per_sigma=mpps)
    if kind == "superpos":
        with open(arg) as fh:
            packets = json.load(fh)
        return superposition_state(g, k, packets, min_points_per_sigma=mpps)
    raise DomainError(f"unknown initial-state descriptor {cfg.init!r}")


def superposition_state(grid: Grid, kappa, packets, min_points_per_sigma=16.0) -> GridState:
    """sum_j sqrt(w_j) |psi_j> of Gaussian packets (pointer-shaped unless vx/cxp given)."""
    ps = pointer_fixed_point(kappa)
    psi = np.zeros(grid.n_points, complex)
    for pk in packets:
        vx = pk.get("vx", ps.var_x_ps)
        c = pk.get("cxp", ps.cov_xp_ps)
        if math.sqrt(vx) / grid.dx < min_points_per_sigma:
            raise ResolutionError("grid does not resolve superposition packet")
        psi += math.sqrt(pk["w"]) * gaussian_amplitudes(grid.x, kappa, pk["x"], pk.get("p", 0.0), vx, c)
    return GridState(grid, psi, kappa).normalized()


# ---------------------------------------------------------------------------
# batched trajectory loop


class _Clock:
    """Per-trajectory jump scheduler (exponential clock or per-step Bernoulli)."""

    def __init__(self, seeds, scheme, dt):
        self.rngs = [np.random.default_rng(s) for s in seeds]
        self.scheme = scheme
        self.dt = dt
        B = len(seeds)
        self.hazard = np.zeros(B)
        if scheme == "clock":
            self.target = np.array([-math.log(1.0 - g.random()) for g in self.rngs])
        else:
            self._buf = [g.random(1024) for g in self.rngs]
            self._pos = np.zeros(B, dtype=int)

    def due(self, r_old, r_new, alive):
        if self.scheme == "clock":
            self.hazard += 0.5 * (r_old + r_new) * self.dt
            return np.flatnonzero(alive & (self.hazard >= self.target))
        out = []
        for b in np.flatnonzero(alive):
            if self._pos[b] == len(self._buf[b]):
                self._buf[b] = self.rngs[b].random(1024)
                self._pos[b] = 0
            u = self._buf[b][self._pos[b]]
            self._pos[b] += 1
            if u < r_old[b] * self.dt:
                out.append(b)
        return np.array(out, dtype=int)

    def reset(self, b):
        if self.scheme == "clock":
            self.hazard[b] = 0.0
            self.target[b] = -math.log(1.0 - self.rngs[b].random())


def perturb_initial(psi, grid: Grid, seed, eps):
    """Mix a seeded random combination of the first three Hermite modes into ``psi``.

    psi -> psi (1 + eps sum_k a_k He_k(u)), u = (x - <x>)/sigma_x, a_k complex
    standard normal.  A pointer state and every state reached from it by
    jumps and NLPSE flow is parity-symmetric about its mean; this tiny
    admixture provides the asymmetry that decides which post-jump peak
    survives.  Returns a normalized copy.
    """
    if eps == 0:
        return psi.copy()
    x = grid.x
    a2 = np.abs(psi) ** 2
    w = a2.sum()
    mx = (a2 * x).sum() / w
    sx = math.sqrt((a2 * (x - mx) ** 2).sum() / w)
    u = (x - mx) / sx
    rng = np.random.default_rng([int(seed), 0x5EED])
    c = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    herm = c[0] * u + c[1] * (u * u - 1.0) + c[2] * (u**3 - 3.0 * u)
    out = psi * (1.0 + eps * herm)
    return out / math.sqrt(np.sum(np.abs(out) ** 2) * grid.dx)


def _rates(m, kappa, t, override):
    if override is None:
        return np.maximum(jump_rate_from_moments(m, kappa), 0.0)
    if callable(override):
        return np.asarray(override(t, m), dtype=float)
    return np.full(len(m), float(override))


def _run_batch(init_psi: np.ndarray, grid: Grid, cfg: EnsembleConfig, indices, seeds):
    """Evolve rows ``init_psi`` (B, n) as independent trajectories."""
    k, dt = cfg.kappa, cfg.step
    n_steps = cfg.n_steps
    B = len(seeds)
    prop = Propagator(grid.n_points, grid.dx, k, dt, corrector=cfg.corrector,
                      max_norm_drift=cfg.max_norm_drift, ordering=cfg.ordering)
    psi = np.array(init_psi, dtype=complex, copy=True)
    x_min = np.full(B, grid.x_min)
    phi = prop.fft(psi)
    m = prop.moments(psi, phi, x_min)
    clock = _Clock(seeds, cfg.jump_scheme, dt)
    alive = np.ones(B, dtype=bool)
    fail_msg = [None] * B
    n_rec = n_steps // cfg.record_stride + 1 + (n_steps % cfg.record_stride != 0)
    times = np.empty(n_rec)
    rec = np.full((B, n_rec, 5), np.nan)
    times[0] = 0.0
    rec[:, 0] = m[:, :5]
    jumps = [[] for _ in range(B)]
    flags = [set() for _ in range(B)]
    r_old = _rates(m, k, 0.0, cfg.rate_override)
    j = 1
    for i in range(1, n_steps + 1):
        t = i * dt
        live = np.flatnonzero(alive)
        if len(live) == 0:
            break
        if len(live) == B:
            psi, phi, m, drift = prop.step_refined(psi, phi, x_min, m, cfg.max_norm_drift)
        else:
            p_, f_, m_, d_ = prop.step_refined(psi[live], phi[live], x_min[live], m[live],
                                               cfg.max_norm_drift)
            psi[live], phi[live], m[live] = p_, f_, m_
            drift = np.zeros(B)
            drift[live] = d_
        bad = alive & ((drift > cfg.max_norm_drift) | ~np.isfinite(m[:, :5]).all(axis=1))
        for b in np.flatnonzero(bad):
            alive[b] = False
            what = "non-finite amplitude" if not np.isfinite(m[b, :5]).all() else f"norm drift {drift[b]:.3g}"
            fail_msg[b] = (t, f"{what} at t={t:.6g}")
            psi[b] = 0.0
            phi[b] = 0.0
            m[b] = (0.0, 0.0, 1.0, 1.0, 0.0, 1.0)
        r_new = _rates(m, k, t, cfg.rate_override)
        fire = clock.due(r_old, r_new, alive)
        if len(fire):
            fire = fire[r_new[fire] > 0]
        if len(fire):
            psi[fire] = prop.jump(psi[fire], x_min[fire], m[fire])
            phi[fire] = prop.fft(psi[fire])
            m[fire] = prop.moments(psi[fire], phi[fire], x_min[fire])
            for b in fire:
                jumps[b].append(t)
                clock.reset(b)
            r_new[fire] = _rates(m[fire], k, t, cfg.rate_override)
        r_old = r_new
        if cfg.recenter:
            moved, lost = prop.recenter(psi, phi, x_min, m)
            for b in moved[lost > DISCARD_TOL]:
                flags[b].add("leakage")
        if i % cfg.record_stride == 0 or i == n_steps:
            times[j] = t
            rec[alive, j] = m[alive, :5]
            lk = prop.leakage(psi[alive]) if alive.any() else []
            for b, v in zip(np.flatnonzero(alive), lk):
                if v > LEAKAGE_TOL:
                    flags[b].add("leakage")
            j += 1
    records, failures = [], []
    for b in range(B):
        if fail_msg[b] is not None:
            failures.append((indices[b], seeds[b], fail_msg[b][0], fail_msg[b][1]))
            continue
        final = None
        if cfg.keep_final_state:
            g = Grid(grid.n_points, float(x_min[b]), float(x_min[b]) + grid.length)
            final = GridState(g, psi[b].copy(), k, n_steps * dt, set(flags[b]))
        records.append(TrajectoryRecord(indices[b], seeds[b], times.copy(), rec[b].copy(),
                                        np.array(jumps[b]), final, flags[b]))
    return records, failures


def run_trajectory(init: GridState, cfg: EnsembleConfig, seed: int) -> TrajectoryRecord:
    """One trajectory from ``init`` with RNG seeded by ``seed``."""
    from .grid import NumericalBreakdown

    psi0 = perturb_initial(init.normalized().psi, init.grid, seed, cfg.asymmetry)
    recs, fails = _run_batch(psi0[None, :], init.grid, cfg, [0], [int(seed)])
    if fails:
        _, _, t, msg = fails[0]
        raise NumericalBreakdown(f"trajectory 0 (seed {seed}) failed: {msg}")
    return recs[0]


def run_ensemble(cfg: EnsembleConfig, init: Optional[GridState] = None) -> EnsembleResult:
    """``cfg.n_traj`` independent trajectories.

    Trajectories are processed in fixed chunks of ``cfg.batch_size``; every
    computation is row-independent, so the output is bit-identical for any
    thread count.
    """
    if init is None:
        init = initial_state(cfg)
    init = init.normalized()
    grid = init.grid
    seeds = [trajectory_seed(cfg.master_seed, i) for i in range(cfg.n_traj)]
    chunks = [list(range(a, min(a + cfg.batch_size, cfg.n_traj)))
              for a in range(0, cfg.n_traj, cfg.batch_size)]
    threads = cfg.threads or 1

    def work(idx):
        psi0 = np.array([perturb_initial(init.psi, grid, seeds[i], cfg.asymmetry)
                         for i in idx])
        return _run_batch(psi0, grid, cfg, idx, [seeds[i] for i in idx])

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    records = [r for rs, _ in results for r in rs]
    failures = [f for _, fs in results for f in fs]
    for f in failures:
        log.warning("trajectory %d (seed %d) failed at t=%.6g: %s", *f)
    return EnsembleResult(sorted(records, key=lambda r: r.index), failures, cfg)


def post_jump_relaxation(record: TrajectoryRecord, var_p_ps: float, rtol: float = 0.1):
    """For each inter-jump interval: did V_p come back within ``rtol`` of V_p,ps
    before the next jump?  Returns a boolean array (one entry per interval)."""
    t, vp = record.times, record.moments[:, 3]
    edges = list(record.jump_times) + [t[-1] + 1.0]
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (t > a) & (t < b)
        out.append(bool(np.any(np.abs(vp[sel] / var_p_ps - 1.0) < rtol)))
    return np.array(out, dtype=bool)
