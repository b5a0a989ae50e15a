"""Finite-sample statistics of trajectory ensembles and diffusion-constant fits.

The fits are consecutive one-parameter least squares against the closed-form
OU moment curves: D_p from Var[p], then D_xp from Cov[x,p] with D_p fixed,
then D_x from Var[x] with both fixed.  Every model is linear in its unknown,
so each fit is a closed-form projection.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .jump_model import DiffusionConstants
from .model import DomainError
from .ou import finite_sample_laws, ou_moments


class AlignmentError(ValueError):
    """Requested times are not sample times of every record."""


class FitError(ArithmeticError):
    """A fit could not be carried out; ``residuals`` holds the diagnostic curve."""

    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals


@dataclass
class SampleSeries:
    """Sample statistics vs. time; optionally keeps the per-trajectory samples."""

    t: np.ndarray
    n: int
    mean_x: np.ndarray
    mean_p: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    cov_xp: np.ndarray
    x: Optional[np.ndarray] = None      # (N, len(t)) first moments, relative to start
    p: Optional[np.ndarray] = None


def statistics_from_samples(x, p, t, keep_samples=True) -> SampleSeries:
    """Sample means, Bessel-corrected variances and covariance along axis 0."""
    x = np.atleast_2d(np.asarray(x, float))
    p = np.atleast_2d(np.asarray(p, float))
    N = x.shape[0]
    if N < 2:
        raise DomainError("sample statistics need N >= 2")
    mx = x.mean(axis=0)
    mp = p.mean(axis=0)
    dx = x - mx
    dp = p - mp
    return SampleSeries(
        t=np.asarray(t, float), n=N, mean_x=mx, mean_p=mp,
        var_x=(dx * dx).sum(axis=0) / (N - 1),
        var_p=(dp * dp).sum(axis=0) / (N - 1),
        cov_xp=(dx * dp).sum(axis=0) / (N - 1),
        x=x if keep_samples else None, p=p if keep_samples else None,
    )


def _time_index(times, t, tol):
    t = np.atleast_1d(np.asarray(t, float))
    idx = np.searchsorted(times, t)
    idx = np.clip(idx, 0, len(times) - 1)
    lo = np.clip(idx - 1, 0, len(times) - 1)
    idx = np.where(np.abs(times[lo] - t) < np.abs(times[idx] - t), lo, idx)
    bad = np.abs(times[idx] - t) > tol
    if np.any(bad):
        raise AlignmentError(f"time(s) {t[bad]} are not sample times")
    return idx


def trajectory_samples(records: Sequence, t=None, tol=1e-9):
    """(t, x, p) arrays from records; NaN rows (failed samples) raise AlignmentError."""
    records = list(records)
    if not records:
        raise DomainError("no records")
    base = records[0].times
    if t is None:
        t = base
    t = np.atleast_1d(np.asarray(t, float))
    xs, ps = [], []
    for r in records:
        idx = _time_index(r.times, t, tol)
        xs.append(r.moments[idx, 0])
        ps.append(r.moments[idx, 1])
    x, p = np.array(xs), np.array(ps)
    if not (np.isfinite(x).all() and np.isfinite(p).all()):
        raise AlignmentError("some records lack moments at the requested times")
    return t, x, p


def sample_statistics(records: Sequence, t=None, tol=1e-9) -> SampleSeries:
    """E_N[x], E_N[p], Var_N[x], Var_N[p], Cov_N[x,p] at time(s) ``t`` (default: all)."""
    t, x, p = trajectory_samples(records, t, tol)
    return statistics_from_samples(x, p, t)


# ---------------------------------------------------------------------------
# fitting


def _basis(t):
    a = -np.expm1(-t)
    f_p = -0.5 * np.expm1(-2.0 * t)                # Var[p] = D_p f_p
    g_p = 0.5 * a * a                               # Cov = D_p g_p + D_xp g_xp
    g_xp = a
    h_x = t                                         # Var[x] = D_x h_x + D_p h_p + D_xp h_xp
    h_p = t - 0.5 * a * a - a
    h_xp = 2.0 * t - 2.0 * a
    return f_p, g_p, g_xp, h_x, h_p, h_xp


def _project(basis, y, w):
    den = np.sum(w * basis * basis)
    if not den > 0:
        raise FitError("degenerate fit basis (no informative time points)")
    return float(np.sum(w * basis * y) / den)


def _fit_once(t, var_x, var_p, cov, w=None):
    f_p, g_p, g_xp, h_x, h_p, h_xp = _basis(t)
    wp = wc = wx = np.ones_like(t)
    if w is not None:
        wx, wp, wc = w
    D_p = _project(f_p, var_p, wp)
    D_xp = _project(g_xp, cov - D_p * g_p, wc)
    D_x = _project(h_x, var_x - D_p * h_p - D_xp * h_xp, wx)
    res = {
        "var_p": var_p - D_p * f_p,
        "cov_xp": cov - D_p * g_p - D_xp * g_xp,
        "var_x": var_x - D_x * h_x - D_p * h_p - D_xp * h_xp,
    }
    return D_x, D_p, D_xp, res


def _weights(t, D_x, D_p, D_xp, n):
    """Inverse predicted finite-sample variances; t = 0 points get zero weight."""
    laws = finite_sample_laws(DiffusionConstants(D_x, D_p, D_xp), t, max(n, 2))
    out = []
    for v in (laws.var_var_x, laws.var_var_p, laws.var_cov_xp):
        v = np.asarray(v, float)
        w = np.zeros_like(v)
        ok = v > 0
        w[ok] = 1.0 / v[ok]
        out.append(w)
    return out


def fit_diffusion(series: SampleSeries, window=(0.0, 5.0), weighted=False, n_boot=200,
                  seed=0, min_points=10) -> DiffusionConstants:
    """Consecutive fits of D_p, D_xp, D_x inside the time ``window``.

    Moments are measured relative to the initial values, assumed sharp.
    With ``weighted`` each fit is redone with weights equal to the inverse
    predicted finite-sample variance at the unweighted estimate.  When the
    series carries per-trajectory samples, ``n_boot`` trajectory resamples
    give the uncertainties.
    """
    t = np.asarray(series.t, float)
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    ts = t[sel]
    if len(ts) < min_points:
        raise FitError(f"only {len(ts)} time points in window {window}, need {min_points}")
    if ts.max() - ts.min() < 1.0:
        raise FitError("fit window must span at least one relaxation time")

    def fit(vx, vp, cv):
        D = _fit_once(ts, vx, vp, cv)
        if weighted:
            D = _fit_once(ts, vx, vp, cv, _weights(ts, max(D[0], 0.0), max(D[1], 1e-300), D[2], series.n))
        return D

    D_x, D_p, D_xp, res = fit(series.var_x[sel], series.var_p[sel], series.cov_xp[sel])
    if not np.all(np.isfinite([D_x, D_p, D_xp])):
        raise FitError("fit produced non-finite constants", res)
    sig = (None, None, None)
    if n_boot and series.x is not None:
        rng = np.random.default_rng(seed)
        X, P = series.x[:, sel], series.p[:, sel]
        N = X.shape[0]
        boots = np.empty((n_boot, 3))
        for b in range(n_boot):
            idx = rng.integers(0, N, N)
            s = statistics_from_samples(X[idx], P[idx], ts, keep_samples=False)
            boots[b] = fit(s.var_x, s.var_p, s.cov_xp)[:3]
        sig = tuple(float(v) for v in boots.std(axis=0, ddof=1))
    return DiffusionConstants(D_x, D_p, D_xp, source="fitted", sigma_Dx=sig[0], sigma_Dp=sig[1],
                              sigma_Dxp=sig[2], extra={"residuals": res, "t": ts, "n": series.n})


# ---------------------------------------------------------------------------
# coverage


@dataclass(frozen=True)
class Coverage:
    t: np.ndarray
    fraction: np.ndarray
    lo: np.ndarray           # binomial band for the nominal probability
    hi: np.ndarray
    n: int
    nominal: float

    def within_band(self):
        return (self.fraction >= self.lo) & (self.fraction <= self.hi)


def coverage_check(samples, t, d: DiffusionConstants, mean=None, variable="p",
                   confidence=0.997) -> Coverage:
    """Fraction of trajectories within one predicted standard deviation of the mean.

    ``samples`` is an (N, len(t)) array of first moments (relative to the sharp
    initial value) or a sequence of TrajectoryRecords.  ``mean`` defaults to
    the drift solution for zero initial momentum, i.e. 0.  The band is the
    central binomial interval at ``confidence`` for the nominal 0.6827.
    """
    t = np.atleast_1d(np.asarray(t, float))
    if not isinstance(samples, np.ndarray):
        _, x, p = trajectory_samples(samples, t)
        x0 = np.array([r.moments[0, 0] for r in samples])[:, None]
        p0 = np.array([r.moments[0, 1] for r in samples])[:, None]
        samples = (p - p0) if variable == "p" else (x - x0)
    a = np.atleast_2d(np.asarray(samples, float))
    m = ou_moments(d, t)
    var = {"p": m.var_p, "x": m.var_x}[variable]
    sd = np.sqrt(var)
    center = np.zeros_like(t) if mean is None else np.asarray(mean, float)
    inside = np.abs(a - center) <= sd
    frac = inside.mean(axis=0)
    N = a.shape[0]
    nominal = float(stats.norm.cdf(1.0) - stats.norm.cdf(-1.0))
    lo, hi = stats.binom.interval(confidence, N, nominal)
    return Coverage(t, frac, np.full_like(t, lo / N), np.full_like(t, hi / N), N, nominal)
