"""Observables: analytic impulse response, aggregation, curve comparison.

For an impulsive release of N molecules at distance d from the unit
receiver square in free 2D diffusion, the expected receiver count is

    N * area / (4 pi D t) * exp(-d^2 / (4 D t))

which peaks at t = d^2 / (4 D).  The simulated domain is finite, so the
simulation is expected to track this curve only while the diffusion cloud
has not substantially met the walls.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "expected_rx_impulse",
    "impulse_peak",
    "aggregate",
    "curve_error",
]


def expected_rx_impulse(t, molecules: float, distance: float, diffusion: float,
                        area: float = 1.0):
    """Expected receiver count at time(s) ``t`` for an impulsive release.

    Accepts a scalar or array ``t``; ``t == 0`` returns 0 (the limit),
    negative times are rejected.
    """
    if molecules < 0:
        raise ValueError(f"molecule count must be non-negative, got {molecules}")
    if not (distance >= 0.0 and math.isfinite(distance)):
        raise ValueError(f"distance must be non-negative, got {distance}")
    if not (diffusion > 0.0 and math.isfinite(diffusion)):
        raise ValueError(f"diffusion must be positive, got {diffusion}")
    if not (area > 0.0 and math.isfinite(area)):
        raise ValueError(f"receiver area must be positive, got {area}")
    t_arr = np.asarray(t, dtype=np.float64)
    if (t_arr < 0.0).any():
        raise ValueError("time must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = molecules * area / (4.0 * math.pi * diffusion * t_arr) \
            * np.exp(-distance * distance / (4.0 * diffusion * t_arr))
    out = np.where(t_arr == 0.0, 0.0, out)
    if np.isscalar(t) or t_arr.ndim == 0:
        return float(out)
    return out


def impulse_peak(molecules: float, distance: float, diffusion: float,
                 area: float = 1.0) -> tuple[float, float]:
    """Peak time and height of the analytic impulse response."""
    t_star = distance * distance / (4.0 * diffusion)
    return t_star, expected_rx_impulse(t_star, molecules, distance, diffusion, area)


def aggregate(series) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over realizations of an observable series.

    ``series`` is an iterable of equal-length per-realization arrays.  The
    standard error uses the sample standard deviation (ddof 1) and is zero
    for a single realization.
    """
    mat = np.asarray(list(series), dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValueError("need at least one realization of a 1D series")
    mean = mat.mean(axis=0)
    n = mat.shape[0]
    if n == 1:
        stderr = np.zeros_like(mean)
    else:
        stderr = mat.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, stderr


def curve_error(times, observed, expected, window: tuple[float, float]) -> tuple[float, float]:
    """Mean and max absolute deviation between two curves over a time window."""
    t = np.asarray(times, dtype=np.float64)
    obs = np.asarray(observed, dtype=np.float64)
    exp = np.asarray(expected, dtype=np.float64)
    if not (t.shape == obs.shape == exp.shape):
        raise ValueError("times, observed and expected must have matching shapes")
    if np.isnan(obs).any() or np.isnan(exp).any():
        raise ValueError("curves must not contain NaN")
    lo, hi = window
    mask = (t >= lo) & (t <= hi)
    if not mask.any():
        raise ValueError(f"no samples inside window [{lo}, {hi}]")
    dev = np.abs(obs[mask] - exp[mask])
    return float(dev.mean()), float(dev.max())
