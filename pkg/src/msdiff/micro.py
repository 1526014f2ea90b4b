"""Microscopic engine: Brownian particle steps with specular walls.

Positions advance by sqrt(2 D dt) times independent standard normals per
axis.  A candidate outside the environment is folded back by mirror
reflection, repeated until it lands inside (the fold is a triangle wave
with period twice the domain size, so arbitrarily distant candidates are
handled in one pass).
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Environment, GeometryError, Partition, Rect, locate
from .kernels import fold_coordinate

__all__ = [
    "brownian_step",
    "reflect",
    "fold_positions",
    "advance_all",
    "place_uniform",
]


def brownian_step(x: float, y: float, diffusion: float, dt: float,
                  n1: float, n2: float) -> tuple[float, float]:
    """One unconstrained Brownian displacement (no walls applied)."""
    if not (diffusion >= 0.0 and math.isfinite(diffusion)):
        raise ValueError(f"diffusion coefficient must be non-negative, got {diffusion}")
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"time step must be positive, got {dt}")
    if not (math.isfinite(n1) and math.isfinite(n2)):
        raise ValueError("normal variates must be finite")
    scale = math.sqrt(2.0 * diffusion * dt)
    return x + scale * n1, y + scale * n2


def reflect(x: float, y: float, env: Environment) -> tuple[float, float]:
    """Fold a candidate position back into the closed environment rectangle."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"cannot reflect non-finite position ({x}, {y})")
    return fold_coordinate(x, env.width), fold_coordinate(y, env.height)


def fold_positions(candidates: np.ndarray, env: Environment) -> np.ndarray:
    """Vectorized :func:`reflect` over an (n, 2) candidate array."""
    out = np.empty_like(candidates)
    for col, width in ((0, env.width), (1, env.height)):
        v = candidates[:, col]
        period = 2.0 * width
        m = np.mod(v, period)
        m = np.where(m > width, period - m, m)
        inside = (v >= 0.0) & (v <= width)
        out[:, col] = np.where(inside, v, m)
    return out


def advance_all(positions: np.ndarray, diffusion: float, dt: float,
                env: Environment, partition: Partition,
                rng: np.random.Generator):
    """Step every molecule once and split the survivors from the crossers.

    Normals are drawn from ``rng`` in molecule-index order (one x/y pair
    per molecule).  Returns ``(kept, transfers)``: positions that ended in
    a microscopic region, and a list of ``(x, y, region_id)`` for those
    that ended in a mesoscopic region.  With ``diffusion == 0`` this is an
    identity sweep.
    """
    n = positions.shape[0]
    normals = rng.standard_normal((n, 2))
    scale = math.sqrt(2.0 * diffusion * dt)
    folded = fold_positions(positions + scale * normals, env)
    kept = []
    transfers = []
    for i in range(n):
        x, y = float(folded[i, 0]), float(folded[i, 1])
        region, sv = locate(partition, x, y)
        if sv < 0:
            kept.append((x, y))
        else:
            transfers.append((x, y, region))
    return np.asarray(kept, dtype=np.float64).reshape(len(kept), 2), transfers


def place_uniform(rect: Rect, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. uniform points in ``rect`` as an (n, 2) array.

    Draws one (n, 2) uniform block, x in column 0 and y in column 1, so
    the stream order matches the per-molecule order used elsewhere.
    """
    if n < 0:
        raise ValueError(f"cannot place a negative number of molecules: {n}")
    u = rng.random((n, 2))
    out = np.empty((n, 2), dtype=np.float64)
    out[:, 0] = rect.x0 + u[:, 0] * (rect.x1 - rect.x0)
    out[:, 1] = rect.y0 + u[:, 1] * (rect.y1 - rect.y0)
    return out
