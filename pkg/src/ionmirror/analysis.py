"""Fringe fitting and correlation statistics for distance sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

GRID_RESOLUTION = 1e-3  # period grid step as a fraction of the x span
MIN_POINTS = 8


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    """``y ~ offset + amplitude * sin(2 pi x / wavelength + phase)``.

    ``wavelength`` is NaN when the data carry no oscillation at all.
    """

    offset: float
    amplitude: float
    wavelength: float
    phase: float
    rms_residual: float

    @property
    def defined(self) -> bool:
        return math.isfinite(self.wavelength)


def _design(xs, period):
    w = 2 * math.pi / period
    return np.column_stack([np.ones_like(xs), np.sin(w * xs), np.cos(w * xs)])


def _linear_fit(xs, ys, period):
    """Exact least squares for fixed period; returns (coef, sum of squared residuals)."""
    a = _design(xs, period)
    coef, *_ = np.linalg.lstsq(a, ys, rcond=None)
    r = ys - a @ coef
    return coef, float(r @ r)


def _prepare(xs, ys):
    xs = np.asarray(xs, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if xs.shape != ys.shape:
        raise AnalysisError(f"xs and ys differ in length ({xs.size} vs {ys.size})")
    if xs.size < MIN_POINTS:
        raise AnalysisError(f"need at least {MIN_POINTS} points, got {xs.size}")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise AnalysisError("data contain non-finite values")
    span = float(xs.max() - xs.min())
    if span <= 0:
        raise AnalysisError("xs must span a nonzero range")
    return xs, ys, span


def period_grid(span: float, bounds=None) -> np.ndarray:
    lo, hi = bounds if bounds is not None else (span / 20, span)
    if not 0 < lo < hi:
        raise AnalysisError(f"invalid period bounds ({lo}, {hi})")
    count = int(math.ceil((hi - lo) / (GRID_RESOLUTION * span))) + 1
    return np.linspace(lo, hi, count)


def periodogram(xs, ys, bounds=None):
    """Residual sum of squares of the best sinusoid at each trial period.

    Returns ``(periods, rss)``; lower is better.
    """
    xs, ys, span = _prepare(xs, ys)
    periods = period_grid(span, bounds)
    # center x for conditioning; shifts only the phase
    xc = xs - xs.mean()
    rss = np.array([_linear_fit(xc, ys, p)[1] for p in periods])
    return periods, rss


def dominant_period(xs, ys, bounds=None) -> float:
    periods, rss = periodogram(xs, ys, bounds)
    return float(periods[int(np.argmin(rss))])


def fit_sinusoid(xs, ys, bounds=None) -> FitResult:
    """Least-squares sinusoid with the period found by grid scan plus refinement.

    For a fixed period the model is linear in ``(a, b cos phi, b sin phi)``
    and is solved exactly; the period comes from the grid minimum refined
    by a bounded scalar search between its neighbours.
    """
    xs, ys, span = _prepare(xs, ys)
    n = xs.size
    spread = float(np.ptp(ys))
    if spread <= 1e-15 * max(1.0, float(np.max(np.abs(ys)))):
        return FitResult(float(ys.mean()), 0.0, math.nan, 0.0, float(np.std(ys)))
    shift = float(xs.mean())
    xc = xs - shift
    periods = period_grid(span, bounds)
    rss = np.array([_linear_fit(xc, ys, p)[1] for p in periods])
    k = int(np.argmin(rss))
    lo = periods[max(k - 1, 0)]
    hi = periods[min(k + 1, periods.size - 1)]
    best, best_rss = float(periods[k]), float(rss[k])
    if hi > lo:
        res = minimize_scalar(lambda p: _linear_fit(xc, ys, p)[1], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12 * span})
        if res.fun <= best_rss:
            best, best_rss = float(res.x), float(res.fun)
    (a, bs, bc), _ = _linear_fit(xc, ys, best)
    amplitude = math.hypot(bs, bc)
    # b sin(w xc + phi0) = bs sin + bc cos;  undo the centering shift
    phase = math.atan2(bc, bs) - 2 * math.pi * shift / best
    return FitResult(float(a), amplitude, best, phase % (2 * math.pi),
                     math.sqrt(max(best_rss, 0.0) / n))


def model(fit: FitResult, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if not fit.defined:
        return np.full_like(xs, fit.offset)
    return fit.offset + fit.amplitude * np.sin(2 * math.pi * xs / fit.wavelength + fit.phase)


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise AnalysisError("pearson needs equal-length inputs")
    if x.size < 3:
        raise AnalysisError(f"pearson needs at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0 or syy == 0:
        raise AnalysisError("pearson is undefined for zero-variance data")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))
