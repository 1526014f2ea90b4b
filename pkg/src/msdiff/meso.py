"""Mesoscopic diffusion engine: transition rates and direct-method sampling.

A molecule in subvolume i hops to neighbor j with rate

    k_ij = 2 * D * overlap / (w_i^2 * (w_i + w_j))

where w_i, w_j are the two subvolume widths and ``overlap`` is the shared
face length.  For equal unit squares with a full shared face this reduces
to D / w^2.  The propensity of subvolume i is a_i = U_i * K_i with U_i the
molecule count and K_i the sum of its outgoing link rates; events are
sampled with the direct method: an exponential waiting time from the total
propensity and two weighted die rolls (source subvolume, then link).

These functions are the reference implementations used for setup and in
tests; the run loop itself lives in :mod:`msdiff.kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Partition

__all__ = [
    "transition_rate",
    "build_link_rates",
    "PropensityTable",
    "new_table",
    "rebuild_propensities",
    "sample_event_time",
    "select_source",
    "select_destination",
    "execute_event",
    "add_molecules",
    "DEFAULT_REBUILD_EVERY",
]

# How many incremental updates the running total propensity may absorb
# before it is recomputed from scratch to shed float drift.
DEFAULT_REBUILD_EVERY = 1_000_000

_OVERLAP_TOL = 1e-12


def transition_rate(width_src: float, width_dest: float, overlap: float,
                    diffusion: float) -> float:
    """Per-molecule hop rate from a subvolume of width ``width_src`` to a
    neighbor of width ``width_dest`` sharing a face of length ``overlap``."""
    if not (width_src > 0.0 and math.isfinite(width_src)
            and width_dest > 0.0 and math.isfinite(width_dest)):
        raise ValueError(f"subvolume widths must be positive, got "
                         f"{width_src} and {width_dest}")
    if not (diffusion >= 0.0 and math.isfinite(diffusion)):
        raise ValueError(f"diffusion coefficient must be non-negative, got {diffusion}")
    if not (0.0 <= overlap <= min(width_src, width_dest) + _OVERLAP_TOL):
        raise ValueError(
            f"overlap {overlap} must lie in [0, min(width) = "
            f"{min(width_src, width_dest)}]"
        )
    return 2.0 * diffusion * overlap / (width_src * width_src * (width_src + width_dest))


def build_link_rates(partition: Partition, diffusion: float):
    """Per-link transition rates and their per-subvolume sums.

    Virtual links (hybrid interface) use the mirror image of the source, so
    the destination width equals the source width.
    """
    n = partition.n_subvolumes
    m = partition.link_dest.size
    link_rate = np.zeros(m, dtype=np.float64)
    src_of = np.zeros(m, dtype=np.int64)
    for s in range(n):
        src_of[partition.link_start[s]:partition.link_start[s + 1]] = s
    for l in range(m):
        s = src_of[l]
        link_rate[l] = transition_rate(
            float(partition.widths[s]),
            float(partition.link_dest_width[l]),
            float(partition.link_overlap[l]),
            diffusion,
        )
    rate_sum = np.zeros(n, dtype=np.float64)
    np.add.at(rate_sum, src_of, link_rate)
    return link_rate, rate_sum


###############################################################################
# Propensity table
###############################################################################


@dataclass
class PropensityTable:
    """Mutable direct-method state over a fixed partition.

    ``a`` is kept as the exact product ``counts * rate_sum``; ``total`` is
    maintained incrementally and recomputed every ``rebuild_every`` events.
    """

    link_start: np.ndarray
    link_dest: np.ndarray
    link_rate: np.ndarray
    rate_sum: np.ndarray
    counts: np.ndarray
    a: np.ndarray = field(init=False)
    total: float = field(init=False)
    rebuild_every: int = DEFAULT_REBUILD_EVERY
    events_since_rebuild: int = field(init=False, default=0)

    def __post_init__(self):
        self.a = np.zeros_like(self.rate_sum)
        self.total = 0.0
        rebuild_propensities(self)


def new_table(partition: Partition, diffusion: float, counts=None,
              rebuild_every: int = DEFAULT_REBUILD_EVERY) -> PropensityTable:
    link_rate, rate_sum = build_link_rates(partition, diffusion)
    if counts is None:
        counts = np.zeros(partition.n_subvolumes, dtype=np.int64)
    else:
        counts = np.asarray(counts, dtype=np.int64).copy()
        if counts.shape != (partition.n_subvolumes,):
            raise ValueError(f"counts must have shape ({partition.n_subvolumes},)")
        if (counts < 0).any():
            raise ValueError("molecule counts must be non-negative")
    return PropensityTable(
        link_start=partition.link_start,
        link_dest=partition.link_dest,
        link_rate=link_rate,
        rate_sum=rate_sum,
        counts=counts,
        rebuild_every=rebuild_every,
    )


def rebuild_propensities(table: PropensityTable) -> None:
    """Recompute every subvolume propensity and the total from scratch."""
    np.multiply(table.counts, table.rate_sum, out=table.a)
    table.total = float(table.a.sum())
    table.events_since_rebuild = 0


def sample_event_time(t: float, total_propensity: float, u1: float) -> float:
    """Next event time from the exponential waiting-time law.

    ``u1`` is a uniform draw from [0, 1); a raw 0.0 maps to 1.0 so the open
    interval (0, 1] is what actually enters the logarithm.  Returns inf
    when the total propensity is zero.
    """
    if not 0.0 <= u1 <= 1.0:
        raise ValueError(f"u1 must lie in [0, 1], got {u1}")
    if total_propensity < 0.0 or not math.isfinite(total_propensity):
        raise ValueError(f"total propensity must be finite and >= 0, got {total_propensity}")
    if total_propensity == 0.0:
        return math.inf
    if u1 <= 0.0:
        u1 = 1.0
    return t - math.log(u1) / total_propensity


def select_source(propensities, u2: float, total: float | None = None) -> int:
    """Weighted die roll over subvolumes.

    Returns the first index (in id order) whose cumulative propensity
    reaches ``u2 * total``, skipping zero-propensity entries so a raw 0.0
    roll cannot land on an empty subvolume.
    """
    a = np.asarray(propensities, dtype=np.float64)
    if not 0.0 <= u2 <= 1.0:
        raise ValueError(f"u2 must lie in [0, 1], got {u2}")
    cs = np.cumsum(a)
    cap = cs[-1] if total is None else total
    if cap <= 0.0:
        raise ValueError("cannot select a source from an all-zero table")
    idx = int(np.searchsorted(cs, u2 * cap, side="left"))
    idx = min(idx, a.size - 1)
    while a[idx] == 0.0:
        idx += 1
        if idx == a.size:
            # Rounding pushed the target past the last occupied entry.
            idx = int(np.nonzero(a)[0][-1])
            break
    return idx


def select_destination(table: PropensityTable, source: int, u3: float) -> tuple[int, int]:
    """Weighted die roll over the outgoing links of ``source``.

    Links are stored by destination id with the virtual link last; the
    cumulative rule matches :func:`select_source`.  Returns
    ``(link_index, destination)`` where destination -1 means the virtual
    microscopic side.
    """
    if not 0.0 <= u3 <= 1.0:
        raise ValueError(f"u3 must lie in [0, 1], got {u3}")
    lo = int(table.link_start[source])
    hi = int(table.link_start[source + 1])
    if hi == lo:
        raise ValueError(f"subvolume {source} has no outgoing links")
    occupancy = float(table.counts[source])
    if occupancy <= 0.0:
        raise ValueError(f"subvolume {source} is empty")
    target = u3 * table.a[source]
    acc = 0.0
    chosen = hi - 1
    for l in range(lo, hi):
        if table.link_rate[l] <= 0.0:
            continue
        acc += table.link_rate[l] * occupancy
        if acc >= target:
            chosen = l
            break
    return chosen, int(table.link_dest[chosen])


def execute_event(table: PropensityTable, source: int, dest: int) -> None:
    """Move one molecule from ``source`` to ``dest`` (-1: leaves the table).

    Propensities are updated incrementally; every ``rebuild_every`` events
    the total is recomputed from scratch.
    """
    if table.counts[source] <= 0:
        raise ValueError(
            f"event from empty subvolume {source}; table state is inconsistent"
        )
    if dest >= 0:
        links = table.link_dest[table.link_start[source]:table.link_start[source + 1]]
        if dest not in links:
            raise ValueError(f"subvolumes {source} and {dest} are not neighbors")
    table.counts[source] -= 1
    table.a[source] = table.counts[source] * table.rate_sum[source]
    if dest >= 0:
        table.counts[dest] += 1
        table.a[dest] = table.counts[dest] * table.rate_sum[dest]
        table.total += table.rate_sum[dest] - table.rate_sum[source]
    else:
        table.total -= table.rate_sum[source]
    if table.total < 0.0:
        table.total = 0.0
    table.events_since_rebuild += 1
    if table.events_since_rebuild >= table.rebuild_every:
        rebuild_propensities(table)


def add_molecules(table: PropensityTable, sv: int, n: int) -> None:
    """Add ``n`` (>= 1) molecules to subvolume ``sv``, e.g. hybrid intake."""
    if n < 1:
        raise ValueError(f"must add at least one molecule, got {n}")
    table.counts[sv] += n
    table.a[sv] = table.counts[sv] * table.rate_sum[sv]
    table.total += n * table.rate_sum[sv]
