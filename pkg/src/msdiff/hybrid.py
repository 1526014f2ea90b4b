"""Two-clock scheduler coupling the mesoscopic and microscopic engines.

One realization keeps a global time t, the next mesoscopic event time t_S,
and a microscopic clock that ticks at fixed multiples of dt.  The loop:

1. stop once t >= t_final;
2. if t_S <= next microscopic tick, advance t to t_S and execute one
   mesoscopic event (a molecule leaving through a virtual link is placed
   uniformly in the interface subvolume's mirror rectangle);
3. otherwise advance t to the tick, step every microscopic molecule, hand
   molecules that ended in a mesoscopic region to the interface subvolume
   with the nearest center, and redraw t_S if any arrived;
4. after every advance, record the RX observable for each observation
   threshold the clock has passed (several at once if t jumped far).

The heavy lifting happens in :mod:`msdiff.kernels`; this module owns state
setup, the resume loop around random-buffer refills, and the per-event
wrappers used in tests.  All randomness of a realization comes from one
counter-based generator (Philox keyed by seed and realization index), so
any schedule of realizations over any number of workers reproduces the
same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import GeometryError, Partition
from .kernels import (
    DONE,
    ERR_NO_INTERFACE,
    F_AT,
    F_T,
    F_TS,
    I_MESO_EV,
    I_MESO_TOTAL,
    I_MICRO_EV,
    I_NMOL,
    I_OBS,
    I_REBUILD,
    I_STEP,
    I_UCUR,
    MICRO_DUE,
    NEED_UNIFORMS,
    NF,
    NI,
    PAUSED,
)
from .meso import DEFAULT_REBUILD_EVERY, build_link_rates

__all__ = [
    "RunContext",
    "RealizationState",
    "RealizationResult",
    "make_rng",
    "new_state",
    "finalize_init",
    "run_realization",
    "run_state",
    "meso_branch",
    "micro_branch",
    "record_observation",
]

# Uniform draws are buffered in blocks; refills never discard the unused
# tail, so the consumed stream is independent of the buffer size.
UNIFORM_CHUNK = 1 << 20

_NO_EVENT_LIMIT = np.int64(2) ** 62

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based per-realization generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, stream & _MASK64]))


@dataclass(frozen=True)
class RunContext:
    """Immutable per-run arrays and constants shared by all realizations."""

    partition: Partition
    link_rate: np.ndarray
    rate_sum: np.ndarray
    diffusion: float
    dt: float
    step_scale: float
    t_final: float
    t_ob: float
    n_obs: int
    rebuild_every: int
    rx_ids: np.ndarray
    rx_rect: np.ndarray
    rx_in_micro: bool
    capacity: int

    @classmethod
    def build(cls, partition: Partition, *, diffusion: float, dt: float,
              t_final: float, t_ob: float, n_obs: int, capacity: int,
              rx_ids, rx_rect, rx_in_micro: bool,
              rebuild_every: int = DEFAULT_REBUILD_EVERY) -> "RunContext":
        link_rate, rate_sum = build_link_rates(partition, diffusion)
        return cls(
            partition=partition,
            link_rate=link_rate,
            rate_sum=rate_sum,
            diffusion=diffusion,
            dt=dt,
            step_scale=math.sqrt(2.0 * diffusion * dt),
            t_final=t_final,
            t_ob=t_ob,
            n_obs=n_obs,
            rebuild_every=rebuild_every,
            rx_ids=np.asarray(rx_ids, dtype=np.int64),
            rx_rect=np.asarray(rx_rect, dtype=np.float64),
            rx_in_micro=rx_in_micro,
            capacity=capacity,
        )


@dataclass
class RealizationState:
    """Everything one in-flight realization mutates."""

    ctx: RunContext
    rng: np.random.Generator
    counts: np.ndarray
    a: np.ndarray
    block_sums: np.ndarray
    positions: np.ndarray
    uniforms: np.ndarray
    fstate: np.ndarray
    istate: np.ndarray
    obs_rx: np.ndarray
    obs_total: np.ndarray

    @property
    def t(self) -> float:
        return float(self.fstate[F_T])

    @property
    def t_next_meso(self) -> float:
        return float(self.fstate[F_TS])

    @property
    def total_propensity(self) -> float:
        return float(self.fstate[F_AT])

    @property
    def t_next_micro(self) -> float:
        if not self.ctx.partition.has_micro:
            return math.inf
        return float(self.istate[I_STEP] + 1) * self.ctx.dt

    @property
    def micro_count(self) -> int:
        return int(self.istate[I_NMOL])

    @property
    def meso_total(self) -> int:
        return int(self.istate[I_MESO_TOTAL])

    @property
    def micro_events(self) -> int:
        return int(self.istate[I_MICRO_EV])

    @property
    def meso_events(self) -> int:
        return int(self.istate[I_MESO_EV])

    def micro_positions(self) -> np.ndarray:
        return self.positions[: self.micro_count].copy()


@dataclass(frozen=True)
class RealizationResult:
    times: np.ndarray
    rx: np.ndarray
    totals: np.ndarray
    micro_events: int
    meso_events: int


def new_state(ctx: RunContext, rng: np.random.Generator) -> RealizationState:
    n = ctx.partition.n_subvolumes
    n_blocks = (n + kernels.BLOCK - 1) // kernels.BLOCK
    istate = np.zeros(NI, dtype=np.int64)
    istate[I_OBS] = 1
    istate[I_REBUILD] = ctx.rebuild_every
    fstate = np.zeros(NF, dtype=np.float64)
    fstate[F_TS] = math.inf
    return RealizationState(
        ctx=ctx,
        rng=rng,
        counts=np.zeros(n, dtype=np.int64),
        a=np.zeros(n, dtype=np.float64),
        block_sums=np.zeros(n_blocks, dtype=np.float64),
        positions=np.zeros((ctx.capacity, 2), dtype=np.float64),
        uniforms=np.zeros(0, dtype=np.float64),
        fstate=fstate,
        istate=istate,
        obs_rx=np.zeros(ctx.n_obs, dtype=np.int64),
        obs_total=np.zeros(ctx.n_obs, dtype=np.int64),
    )


def finalize_init(state: RealizationState) -> None:
    """Seal a freshly filled state: propensities, first event time, buffer.

    Call after molecule counts and positions are in place.  Draw order is
    fixed: the first mesoscopic event time (only if the table is occupied),
    then the uniform buffer prefill.
    """
    ctx = state.ctx
    np.multiply(state.counts, ctx.rate_sum, out=state.a)
    total = kernels.rebuild_block_sums(state.a, state.block_sums)
    state.fstate[F_AT] = total
    state.istate[I_MESO_TOTAL] = int(state.counts.sum())
    if total > 0.0:
        u1 = float(state.rng.random())
        if u1 <= 0.0:
            u1 = 1.0
        state.fstate[F_TS] = -math.log(u1) / total
    else:
        state.fstate[F_TS] = math.inf
    state.uniforms = state.rng.random(UNIFORM_CHUNK)
    state.istate[I_UCUR] = 0


def _refill_uniforms(state: RealizationState) -> None:
    # Keep the unconsumed tail so the stream position depends only on how
    # many draws the kernels actually used.
    buf = state.uniforms
    cur = int(state.istate[I_UCUR])
    rem = buf.size - cur
    if rem > 0:
        buf[:rem] = buf[cur:]
    buf[rem:] = state.rng.random(buf.size - rem)
    state.istate[I_UCUR] = 0


def _ensure_uniforms(state: RealizationState, need: int) -> None:
    if int(state.istate[I_UCUR]) + need > state.uniforms.size:
        _refill_uniforms(state)


def _call_burst(state: RealizationState, max_events) -> int:
    ctx = state.ctx
    return kernels.meso_burst(
        state.counts, state.a, ctx.rate_sum, state.block_sums,
        ctx.partition.link_start, ctx.partition.link_dest, ctx.link_rate,
        ctx.partition.link_mirror, ctx.partition.mirror_rects,
        state.positions, state.uniforms, state.fstate, state.istate,
        state.obs_rx, state.obs_total,
        ctx.rx_ids, ctx.rx_rect, ctx.rx_in_micro,
        state.t_next_micro, ctx.t_final, ctx.t_ob, ctx.n_obs,
        ctx.rebuild_every, max_events,
    )


def _call_sweep(state: RealizationState) -> int:
    ctx = state.ctx
    p = ctx.partition
    _ensure_uniforms(state, 1)
    n0 = state.micro_count
    normals = state.rng.standard_normal((n0, 2))
    return kernels.micro_sweep(
        state.positions, normals, ctx.step_scale, p.env.width, p.env.height,
        p.rect_bounds, p.rect_width, p.rect_nx, p.rect_base, p.rect_region,
        p.rect_is_micro,
        state.counts, state.a, ctx.rate_sum, state.block_sums, p.centers,
        p.iface_offsets, p.iface_ids,
        state.uniforms, state.fstate, state.istate,
        state.obs_rx, state.obs_total,
        ctx.rx_ids, ctx.rx_rect, ctx.rx_in_micro,
        state.t_next_micro, ctx.t_ob, ctx.n_obs,
    )


def run_state(state: RealizationState) -> None:
    """Drive a prepared realization to t_final."""
    while True:
        status = _call_burst(state, _NO_EVENT_LIMIT)
        if status == NEED_UNIFORMS:
            _refill_uniforms(state)
            continue
        if status == DONE:
            return
        # MICRO_DUE: the fixed clock fires before the next event.
        rc = _call_sweep(state)
        if rc == ERR_NO_INTERFACE:
            raise GeometryError(
                "molecule crossed into a mesoscopic region with no interface "
                "subvolumes; the partition is inconsistent"
            )


def run_realization(config, partition: Partition, seed: int,
                    stream: int = 0) -> RealizationResult:
    """Run one full realization of a scenario and return its observables."""
    rng = make_rng(seed, stream)
    ctx = config.run_context(partition)
    state = config.initial_state(ctx, rng)
    run_state(state)
    return result_of(state)


def result_of(state: RealizationState) -> RealizationResult:
    ctx = state.ctx
    times = ctx.t_ob * np.arange(1, ctx.n_obs + 1, dtype=np.float64)
    return RealizationResult(
        times=times,
        rx=state.obs_rx.copy(),
        totals=state.obs_total.copy(),
        micro_events=state.micro_events,
        meso_events=state.meso_events,
    )


###############################################################################
# Single-step wrappers (the kernels run these same paths; tests drive them)
###############################################################################


def meso_branch(state: RealizationState) -> int:
    """Execute exactly one mesoscopic event.  Returns the kernel status."""
    _ensure_uniforms(state, kernels.EVENT_DRAWS)
    return _call_burst(state, 1)


def micro_branch(state: RealizationState) -> None:
    """Execute exactly one microscopic step (one sweep over all molecules)."""
    rc = _call_sweep(state)
    if rc == ERR_NO_INTERFACE:
        raise GeometryError(
            "molecule crossed into a mesoscopic region with no interface "
            "subvolumes; the partition is inconsistent"
        )


def record_observation(state: RealizationState) -> None:
    """Record every observation threshold at or below the current time."""
    kernels.record_due_observations(
        state.counts, state.positions, state.fstate, state.istate,
        state.obs_rx, state.obs_total,
        state.ctx.rx_ids, state.ctx.rx_rect, state.ctx.rx_in_micro,
        state.ctx.t_ob, state.ctx.n_obs,
    )
