"""Hot numerical kernels shared by the mesoscopic and microscopic engines.

Every function here is written as straight-line array code so the same
source runs two ways:

* compiled with ``numba.njit(cache=True)`` (the default), or
* as plain Python/numpy when the environment variable ``MSDIFF_NUMBA=0``
  is set (or numba is not importable).

Both paths consume random numbers from caller-supplied buffers in the same
order, so they produce bit-identical trajectories.  ``benchmarks/`` has a
script comparing the two.

State that mutates across kernel calls lives in two small arrays so a
realization can be suspended and resumed (for random-buffer refills)
without losing anything:

``fstate`` (float64): F_T current time, F_TS next mesoscopic event time,
F_AT total propensity.

``istate`` (int64): I_OBS next observation index (1-based), I_NMOL live
microscopic molecule count, I_UCUR cursor into the uniform buffer,
I_MESO_EV / I_MICRO_EV event counters, I_MESO_TOTAL molecules currently in
mesoscopic regions, I_REBUILD events left until the running total
propensity is recomputed from scratch, I_STEP completed microscopic steps.

The per-subvolume propensity ``a[i]`` is always the exact product
``counts[i] * rate_sum[i]``; only the running block sums and total drift,
which the periodic rebuild bounds.
"""

from __future__ import annotations

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("MSDIFF_NUMBA", "1") != "0"
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but be safe
        USE_NUMBA = False
if not USE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

INF = float("inf")

# Subvolumes per partial-sum block in the source-selection scan.  The scan
# stays linear (block sums, then elements inside one block); no tree.
BLOCK = 32

# fstate slots
F_T, F_TS, F_AT = 0, 1, 2
NF = 3

# istate slots
I_OBS = 0
I_NMOL = 1
I_UCUR = 2
I_MESO_EV = 3
I_MICRO_EV = 4
I_MESO_TOTAL = 5
I_REBUILD = 6
I_STEP = 7
NI = 8

# meso_burst return codes
DONE = 0
NEED_UNIFORMS = 1
MICRO_DUE = 2
PAUSED = 3
# micro_sweep failure: a transferred molecule landed in a mesoscopic region
# with no interface subvolumes (partition inconsistency)
ERR_NO_INTERFACE = -2

# Worst-case uniforms consumed by one mesoscopic event: source and
# destination rolls, two placement coordinates, next event time.
EVENT_DRAWS = 5


@njit(cache=True)
def fold_coordinate(x, width):
    """Reflect x into [0, width] (specular walls, applied as many times as needed)."""
    if 0.0 <= x <= width:
        return x
    period = 2.0 * width
    m = x % period
    if m > width:
        m = period - m
    return m


@njit(cache=True)
def rebuild_block_sums(a, block_sums):
    """Recompute block partial sums and the total propensity from a[]."""
    n = a.size
    total = 0.0
    for b in range(block_sums.size):
        s = 0.0
        lo = b * BLOCK
        hi = min(lo + BLOCK, n)
        for q in range(lo, hi):
            s += a[q]
        block_sums[b] = s
        total += s
    return total


@njit(cache=True)
def pick_subvolume(a, block_sums, target):
    """First index whose running propensity sum reaches ``target``.

    Zero-propensity entries are never returned, so a raw 0.0 die roll
    cannot select an empty subvolume.  Returns -1 only if there is no
    positive propensity at all.
    """
    n = a.size
    acc = 0.0
    for b in range(block_sums.size):
        s = block_sums[b]
        if s > 0.0 and acc + s >= target:
            lo = b * BLOCK
            hi = min(lo + BLOCK, n)
            inner = acc
            for q in range(lo, hi):
                inner += a[q]
                if inner >= target and a[q] > 0.0:
                    return q
        acc += s
    # Rounding pushed the target past the running total; take the last
    # occupied subvolume.
    for q in range(n - 1, -1, -1):
        if a[q] > 0.0:
            return q
    return -1


@njit(cache=True)
def pick_link(link_rate, lo, hi, occupancy, target):
    """First link in [lo, hi) whose running link propensity reaches ``target``."""
    acc = 0.0
    for l in range(lo, hi):
        if link_rate[l] > 0.0:
            acc += link_rate[l] * occupancy
            if acc >= target:
                return l
    return hi - 1


@njit(cache=True)
def count_in_rect(positions, n_mol, x0, y0, x1, y1):
    c = 0
    for i in range(n_mol):
        if x0 <= positions[i, 0] < x1 and y0 <= positions[i, 1] < y1:
            c += 1
    return c


@njit(cache=True)
def _rx_count(counts, positions, istate, rx_ids, rx_rect, rx_in_micro):
    if rx_in_micro:
        return count_in_rect(positions, istate[I_NMOL],
                             rx_rect[0], rx_rect[1], rx_rect[2], rx_rect[3])
    c = 0
    for k in range(rx_ids.size):
        c += counts[rx_ids[k]]
    return c


@njit(cache=True)
def record_due_observations(counts, positions, fstate, istate, obs_rx, obs_total,
                            rx_ids, rx_rect, rx_in_micro, t_ob, n_obs):
    """Record every observation whose time threshold the clock has passed.

    The current state stands in for all thresholds crossed in one jump.
    """
    t = fstate[F_T]
    i_ob = istate[I_OBS]
    while i_ob <= n_obs and t >= i_ob * t_ob:
        obs_rx[i_ob - 1] = _rx_count(counts, positions, istate, rx_ids, rx_rect,
                                     rx_in_micro)
        obs_total[i_ob - 1] = istate[I_MESO_TOTAL] + istate[I_NMOL]
        i_ob += 1
    istate[I_OBS] = i_ob


@njit(cache=True)
def meso_burst(counts, a, rate_sum, block_sums,
               link_start, link_dest, link_rate, link_mirror, mirror_rects,
               positions, uniforms, fstate, istate, obs_rx, obs_total,
               rx_ids, rx_rect, rx_in_micro,
               t_micro_next, t_final, t_ob, n_obs,
               rebuild_every, max_events):
    """Run mesoscopic events until the microscopic clock or t_final wins.

    Each event consumes uniforms in a fixed order: source roll, destination
    roll, two placement coordinates when the destination is virtual, then
    the draw for the next event time.  Returns DONE, NEED_UNIFORMS (caller
    refills the buffer and calls again), MICRO_DUE, or PAUSED when
    max_events is reached.
    """
    t = fstate[F_T]
    ts = fstate[F_TS]
    at = fstate[F_AT]
    done = 0
    status = PAUSED
    while True:
        if t >= t_final:
            status = DONE
            break
        if ts > t_micro_next:
            status = MICRO_DUE
            break
        if ts == INF:
            # No event can ever fire and no microscopic clock is running:
            # the state is frozen, so stamp out the remaining observations.
            i_ob = istate[I_OBS]
            while i_ob <= n_obs:
                obs_rx[i_ob - 1] = _rx_count(counts, positions, istate, rx_ids,
                                             rx_rect, rx_in_micro)
                obs_total[i_ob - 1] = istate[I_MESO_TOTAL] + istate[I_NMOL]
                i_ob += 1
            istate[I_OBS] = i_ob
            t = t_final
            status = DONE
            break
        if done >= max_events:
            break
        cur = istate[I_UCUR]
        if cur + EVENT_DRAWS > uniforms.size:
            status = NEED_UNIFORMS
            break

        # Commit the event time, then roll source and destination.
        t = ts
        u2 = uniforms[cur]
        u3 = uniforms[cur + 1]
        cur += 2
        src = pick_subvolume(a, block_sums, u2 * at)
        lo = link_start[src]
        hi = link_start[src + 1]
        occ = float(counts[src])
        li = pick_link(link_rate, lo, hi, occ, u3 * a[src])
        dest = link_dest[li]

        k_src = rate_sum[src]
        counts[src] -= 1
        a[src] = counts[src] * k_src
        block_sums[src // BLOCK] -= k_src
        if dest >= 0:
            k_dest = rate_sum[dest]
            counts[dest] += 1
            a[dest] = counts[dest] * k_dest
            block_sums[dest // BLOCK] += k_dest
            at += k_dest - k_src
        else:
            # Across the hybrid interface: place the molecule uniformly in
            # the mirror rectangle on the microscopic side.
            mi = link_mirror[li]
            ux = uniforms[cur]
            uy = uniforms[cur + 1]
            cur += 2
            nm = istate[I_NMOL]
            positions[nm, 0] = mirror_rects[mi, 0] + ux * (mirror_rects[mi, 2] - mirror_rects[mi, 0])
            positions[nm, 1] = mirror_rects[mi, 1] + uy * (mirror_rects[mi, 3] - mirror_rects[mi, 1])
            istate[I_NMOL] = nm + 1
            istate[I_MESO_TOTAL] -= 1
            at -= k_src
        istate[I_MESO_EV] += 1

        istate[I_REBUILD] -= 1
        if istate[I_REBUILD] <= 0:
            at = rebuild_block_sums(a, block_sums)
            istate[I_REBUILD] = rebuild_every
        elif at < 0.0:
            # Incremental float drift can leave a tiny negative residue
            # when the table empties; clamp it.
            at = 0.0

        u1 = uniforms[cur]
        cur += 1
        istate[I_UCUR] = cur
        if at > 0.0:
            if u1 <= 0.0:
                u1 = 1.0
            ts = t - math.log(u1) / at
        else:
            ts = INF

        fstate[F_T] = t
        record_due_observations(counts, positions, fstate, istate, obs_rx,
                                obs_total, rx_ids, rx_rect, rx_in_micro,
                                t_ob, n_obs)
        done += 1

    fstate[F_T] = t
    fstate[F_TS] = ts
    fstate[F_AT] = at
    return status


@njit(cache=True)
def micro_sweep(positions, normals, step_scale, env_w, env_h,
                rect_bounds, rect_width, rect_nx, rect_base, rect_region,
                rect_is_micro,
                counts, a, rate_sum, block_sums, centers,
                iface_offsets, iface_ids,
                uniforms, fstate, istate, obs_rx, obs_total,
                rx_ids, rx_rect, rx_in_micro,
                t_next, t_ob, n_obs):
    """Advance every microscopic molecule one time step of size dt.

    Displacements are ``step_scale * n`` with ``step_scale = sqrt(2 D dt)``
    and ``normals[i]`` the pre-drawn pair for molecule i.  Positions are
    folded back into the environment, then classified: molecules ending in
    a mesoscopic region transfer to the interface subvolume with the
    nearest center (ties to the lowest id).  If any molecule transferred,
    the mesoscopic event clock is redrawn from the current time.
    """
    n0 = istate[I_NMOL]
    istate[I_MICRO_EV] += n0

    for i in range(n0):
        positions[i, 0] = fold_coordinate(positions[i, 0] + step_scale * normals[i, 0], env_w)
        positions[i, 1] = fold_coordinate(positions[i, 1] + step_scale * normals[i, 1], env_h)

    n_rects = rect_bounds.shape[0]
    write = 0
    intake = False
    for i in range(n0):
        x = positions[i, 0]
        y = positions[i, 1]
        region = -1
        micro_here = False
        for k in range(n_rects):
            if x >= rect_bounds[k, 0] and y >= rect_bounds[k, 1]:
                if (x < rect_bounds[k, 2] or (x == rect_bounds[k, 2] and x == env_w)) and \
                   (y < rect_bounds[k, 3] or (y == rect_bounds[k, 3] and y == env_h)):
                    region = rect_region[k]
                    micro_here = rect_is_micro[k]
                    break
        if micro_here:
            positions[write, 0] = x
            positions[write, 1] = y
            write += 1
            continue
        # Transfer into the destination region's nearest interface subvolume.
        # A step can overshoot into a region with no interface of its own
        # (possible, though many sigma out); fall back to all interfaces.
        lo = iface_offsets[region]
        hi = iface_offsets[region + 1]
        if hi == lo:
            lo = 0
            hi = iface_ids.size
            if hi == lo:
                return ERR_NO_INTERFACE
        best = -1
        best_d2 = INF
        for k in range(lo, hi):
            sv = iface_ids[k]
            dx = x - centers[sv, 0]
            dy = y - centers[sv, 1]
            d2 = dx * dx + dy * dy
            if d2 < best_d2:
                best_d2 = d2
                best = sv
        k_best = rate_sum[best]
        counts[best] += 1
        a[best] = counts[best] * k_best
        block_sums[best // BLOCK] += k_best
        fstate[F_AT] += k_best
        istate[I_MESO_TOTAL] += 1
        intake = True
    istate[I_NMOL] = write

    fstate[F_T] = t_next
    if intake:
        cur = istate[I_UCUR]
        u1 = uniforms[cur]
        istate[I_UCUR] = cur + 1
        if u1 <= 0.0:
            u1 = 1.0
        at = fstate[F_AT]
        if at > 0.0:
            fstate[F_TS] = t_next - math.log(u1) / at
        else:
            fstate[F_TS] = INF
    record_due_observations(counts, positions, fstate, istate, obs_rx, obs_total,
                            rx_ids, rx_rect, rx_in_micro, t_ob, n_obs)
    istate[I_STEP] += 1
    return 0
