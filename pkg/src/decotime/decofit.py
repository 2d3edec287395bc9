"""Decay-rate extraction from fluctuating-term time series.

The envelope of |f(t)| is taken from its local maxima and fitted by a
straight line in log|f| against t. The oscillation frequency is never
needed: only the slope sets the decoherence time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import HBAR
from .errors import FitInputError
from .estimate import DecoherenceEstimate
from .vanhove import ExpectationSeries

NOISE_FLOOR = 1e-12
POOR_FIT_RESIDUAL = 0.5
MIN_SERIES_POINTS = 8
MIN_FIT_POINTS = 4


@dataclass(frozen=True)
class DecayFit:
    """Single-exponential fit ``amplitude * exp(-rate * t)`` of an envelope."""

    rate: float
    amplitude: float
    residual: float
    window: tuple[float, float]
    n_points: int
    warnings: tuple[str, ...] = field(default_factory=tuple)


def envelope(series: ExpectationSeries, noise_floor: float = 0.0) -> np.ndarray:
    """Envelope points ``(t, |value|)`` as an array of shape (n, 2).

    Interior local maxima of ``|value|`` are used when there are at least
    four; otherwise the decay is taken as non-oscillatory and every point is
    returned. Points flagged as failed, and points at or below
    ``noise_floor``, take no part.
    """
    if len(series) < MIN_SERIES_POINTS:
        raise FitInputError(f"envelope needs at least {MIN_SERIES_POINTS} points, got {len(series)}")
    ok = ~np.asarray(series.failed, dtype=bool)
    t = series.times[ok]
    m = np.abs(series.values[ok])
    above = m > noise_floor
    t, m = t[above], m[above]
    if t.size < MIN_SERIES_POINTS:
        raise FitInputError("too few usable points after removing failed and sub-floor values")
    peak = np.flatnonzero((m[1:-1] >= m[:-2]) & (m[1:-1] > m[2:])) + 1
    if peak.size >= 4:
        t, m = t[peak], m[peak]
    return np.column_stack([t, m])


def _coarse_rate(t: np.ndarray, m: np.ndarray) -> float:
    if t[-1] == t[0]:
        return 0.0
    return math.log(m[0] / m[-1]) / (t[-1] - t[0])


def fit_exponential(points, noise_floor: float = NOISE_FLOOR, window="auto") -> DecayFit:
    """Least-squares fit of ``log|value|`` against ``t``.

    Parameters
    ----------
    points : array_like, shape (n, 2)
        ``(t, |value|)`` pairs, e.g. from :func:`envelope`.
    noise_floor : float
        Points at or below this magnitude are left out.
    window : "auto", None or (t_start, t_end)
        ``"auto"`` fits on ``[t_c, 10 t_c]`` where ``t_c`` comes from a
        coarse two-point estimate, falling back to all points when that
        window holds fewer than four; ``None`` uses all points.

    Raises
    ------
    FitInputError
        Nonpositive magnitudes, or fewer than four points above the floor.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitInputError("points must have shape (n, 2)")
    t, m = pts[:, 0], pts[:, 1]
    if np.any(~np.isfinite(m)) or np.any(m <= 0):
        raise FitInputError("envelope magnitudes must be positive and finite")
    keep = m > noise_floor
    t, m = t[keep], m[keep]
    if t.size < MIN_FIT_POINTS:
        raise FitInputError(f"need at least {MIN_FIT_POINTS} points above the noise floor, got {t.size}")
    order = np.argsort(t)
    t, m = t[order], m[order]

    if window == "auto":
        rate_c = _coarse_rate(t, m)
        sel = np.ones(t.size, dtype=bool)
        if rate_c > 0:
            t_c = 1.0 / rate_c
            cand = (t >= t_c) & (t <= 10 * t_c)
            if np.count_nonzero(cand) >= MIN_FIT_POINTS:
                sel = cand
    elif window is None:
        sel = np.ones(t.size, dtype=bool)
    else:
        lo, hi = window
        sel = (t >= lo) & (t <= hi)
        if np.count_nonzero(sel) < MIN_FIT_POINTS:
            raise FitInputError(f"window {window} holds fewer than {MIN_FIT_POINTS} points")
    t, y = t[sel], np.log(m[sel])

    # centred and scaled abscissa keeps the normal equations well conditioned
    t0 = t.mean()
    ts = max(float(np.ptp(t)), np.finfo(float).tiny)
    x = (t - t0) / ts
    slope_x, icpt = np.polyfit(x, y, 1)
    slope = slope_x / ts
    resid = y - (slope_x * x + icpt)
    residual = float(np.sqrt(np.mean(resid ** 2)))
    rate = max(-slope, 0.0)
    warnings = ()
    if residual > POOR_FIT_RESIDUAL:
        warnings = (f"poor fit: log-envelope rms residual {residual:.3g}",)
    return DecayFit(
        rate=float(rate),
        amplitude=float(math.exp(icpt - slope * t0)),
        residual=residual,
        window=(float(t[0]), float(t[-1])),
        n_points=int(t.size),
        warnings=warnings,
    )


def fit_series(series: ExpectationSeries, noise_floor: float = NOISE_FLOOR, window="auto") -> DecayFit:
    """Envelope extraction followed by :func:`fit_exponential`."""
    return fit_exponential(envelope(series, noise_floor), noise_floor, window)


def estimate_from_fit(fit: DecayFit, **diagnostics) -> DecoherenceEstimate:
    """Fit-route estimate ``t_D = 1/rate``, ``gamma = hbar * rate``.

    A zero rate gives the infinity sentinel.
    """
    diag = {"fit_residual": fit.residual, "fit_window": list(fit.window), "fit_points": fit.n_points}
    diag.update(diagnostics)
    if fit.warnings:
        diag["warnings"] = list(fit.warnings)
    if fit.rate == 0:
        return DecoherenceEstimate(math.inf, 0.0, "fit", diag)
    return DecoherenceEstimate(1.0 / fit.rate, HBAR * fit.rate, "fit", diag)


def background_ratio(series: ExpectationSeries, fit: DecayFit) -> float:
    """Largest deviation of ``|f|`` from the fitted exponential, relative to it, inside the fit window."""
    t0, t1 = fit.window
    ok = (series.times >= t0) & (series.times <= t1) & ~np.asarray(series.failed, dtype=bool)
    if not np.any(ok):
        return math.nan
    model = fit.amplitude * np.exp(-fit.rate * series.times[ok])
    return float(np.max(np.abs(np.abs(series.values[ok]) - model) / model))


def envelope_ratios(series: ExpectationSeries, t_D: float, factors=(1.0, 3.0, 10.0)) -> dict[str, float]:
    """``|f(k t_D)| / |f(0)|`` for each factor k, log-interpolated on the series.

    Entries beyond the end of the series are NaN.
    """
    m = np.abs(series.values)
    out = {}
    if m[0] == 0 or not math.isfinite(t_D):
        return {f"{k:g}": math.nan for k in factors}
    with np.errstate(divide="ignore"):
        logm = np.log(m / m[0])
    for k in factors:
        tk = k * t_D
        if tk > series.times[-1]:
            out[f"{k:g}"] = math.nan
        else:
            out[f"{k:g}"] = float(np.exp(np.interp(tk, series.times, logm)))
    return out
