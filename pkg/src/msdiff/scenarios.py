"""Built-in benchmark scenarios: geometry presets, initial conditions, rates.

The benchmark environment is a 48 x 40 rectangle split into three nested
zones: an inner 20 x 12 rectangle (V1), a surrounding ring of width 6
(V2), and an outer ring of width 8 against the reflective walls (V3).
A point transmitter square TX sits inside V1 seven length units left of
the receiver square RX; both are unit squares aligned to the unit mesh.

Five models assign regimes and subvolume widths to the zones:

===========  =======  =======  =======
model        V1       V2       V3
===========  =======  =======  =======
micro        micro    micro    micro
meso         h = 1    h = 1    h = 1
meso-ms      h = 1    h = 2    h = 4
hyb          micro    h = 1    h = 1
hyb-ms       micro    h = 1    h = 2
===========  =======  =======  =======

Two source tests: ``impulsive`` releases 10^4 molecules in TX at t = 0 and
runs to t = 100; ``uniform`` scatters 9600 molecules (five per unit area)
over the whole environment and runs to t = 2000.  Desk-scale presets use
200 and 100 realizations, the ``-full`` variants 10^4 and 10^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    TILE_TOL,
    Environment,
    GeometryError,
    Partition,
    Rect,
    Region,
    Ring,
    build_partition,
    locate,
)
from .hybrid import RealizationState, RunContext, finalize_init, new_state
from .kernels import I_NMOL
from .meso import DEFAULT_REBUILD_EVERY
from .micro import place_uniform

__all__ = [
    "ENVIRONMENT",
    "ENV_RECT",
    "V1_RECT",
    "V2_OUTER",
    "V3_OUTER",
    "TX_CENTER",
    "RX_CENTER",
    "MODELS",
    "TESTS",
    "BUILTIN_NAMES",
    "ScenarioConfig",
    "builtin_config",
    "parse_config_file",
    "events_per_molecule_time",
]

ENVIRONMENT = Environment(48.0, 40.0)
ENV_RECT = Rect(0.0, 0.0, 48.0, 40.0)
V1_RECT = Rect(14.0, 14.0, 34.0, 26.0)
V2_OUTER = Rect(8.0, 8.0, 40.0, 32.0)
V3_OUTER = Rect(0.0, 0.0, 48.0, 40.0)

# Unit transmitter and receiver squares, center-to-center distance 7.
TX_CENTER = (18.5, 20.5)
RX_CENTER = (25.5, 20.5)
TXRX_DISTANCE = 7.0

MODELS: dict[str, tuple[tuple[str, float], ...]] = {
    "micro": (("micro", 0.0), ("micro", 0.0), ("micro", 0.0)),
    "meso": (("meso", 1.0), ("meso", 1.0), ("meso", 1.0)),
    "meso-ms": (("meso", 1.0), ("meso", 2.0), ("meso", 4.0)),
    "hyb": (("micro", 0.0), ("meso", 1.0), ("meso", 1.0)),
    "hyb-ms": (("micro", 0.0), ("meso", 1.0), ("meso", 2.0)),
}

# test -> (molecules, t_final, desk realizations, full realizations)
TESTS: dict[str, tuple[int, float, int, int]] = {
    "impulsive": (10_000, 100.0, 200, 10_000),
    "uniform": (9_600, 2000.0, 100, 1_000),
}

BUILTIN_NAMES = tuple(
    f"{test}-{model}{suffix}"
    for test in TESTS
    for model in MODELS
    for suffix in ("", "-full")
)


def _unit_square(center: tuple[float, float]) -> Rect:
    cx, cy = center
    return Rect(cx - 0.5, cy - 0.5, cx + 0.5, cy + 0.5)


@dataclass(frozen=True)
class ScenarioConfig:
    """One complete run description; validated on construction."""

    model: str
    test: str
    molecules: int
    t_final: float
    t_ob: float = 1.0
    realizations: int = 1
    seed: int = 1
    diffusion: float = 1.0
    dt_micro: float = 0.25
    rebuild_every: int = DEFAULT_REBUILD_EVERY
    record_final: bool = True
    # (regime, subvolume width) per zone; filled from MODELS unless custom.
    zones: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.test not in TESTS:
            raise ValueError(f"unknown test {self.test!r}; pick from {sorted(TESTS)}")
        if self.model != "custom" and self.model not in MODELS:
            raise ValueError(
                f"unknown model {self.model!r}; pick from {sorted(MODELS)} or 'custom'"
            )
        zones = self.zones if self.model == "custom" else MODELS[self.model]
        if len(zones) != 3:
            raise ValueError("exactly three zone specs are required")
        for regime, width in zones:
            if regime not in ("micro", "meso"):
                raise ValueError(f"zone regime must be 'micro' or 'meso', got {regime!r}")
            if regime == "meso" and width <= 0.0:
                raise ValueError("mesoscopic zones need a positive subvolume width")
        object.__setattr__(self, "zones", tuple(zones))
        if self.molecules < 1:
            raise ValueError("at least one molecule is required")
        if not (self.t_final > 0.0 and math.isfinite(self.t_final)):
            raise ValueError("t_final must be positive and finite")
        if not (self.t_ob > 0.0 and math.isfinite(self.t_ob)):
            raise ValueError("t_ob must be positive and finite")
        if not (self.dt_micro > 0.0 and math.isfinite(self.dt_micro)):
            raise ValueError("dt_micro must be positive and finite")
        if not (self.diffusion >= 0.0 and math.isfinite(self.diffusion)):
            raise ValueError("diffusion must be non-negative and finite")
        if self.realizations < 1:
            raise ValueError("at least one realization is required")
        if self.rebuild_every < 1:
            raise ValueError("rebuild_every must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    # --- derived -----------------------------------------------------------

    @property
    def n_obs(self) -> int:
        n = int(math.floor(self.t_final / self.t_ob + 1e-9))
        hits_final = abs(n * self.t_ob - self.t_final) <= 1e-9 * max(1.0, self.t_final)
        if not self.record_final and hits_final:
            n -= 1
        return n

    @property
    def observation_times(self) -> np.ndarray:
        return self.t_ob * np.arange(1, self.n_obs + 1, dtype=np.float64)

    def region_layout(self) -> list[Region]:
        if all(regime == "micro" for regime, _ in self.zones):
            # A fully microscopic run is one continuous region; separate
            # adjacent microscopic regions would not be a valid layout.
            return [Region(0, ENV_RECT, "micro")]
        extents = (V1_RECT, Ring(V2_OUTER, V1_RECT), Ring(V3_OUTER, V2_OUTER))
        return [
            Region(k, extent, regime, width)
            for k, (extent, (regime, width)) in enumerate(zip(extents, self.zones))
        ]

    def build_partition(self) -> Partition:
        return build_partition(ENVIRONMENT, self.region_layout())

    def run_context(self, partition: Partition) -> RunContext:
        rx_rect = _unit_square(RX_CENTER)
        region, sv = locate(partition, *RX_CENTER)
        if sv < 0:
            rx_ids = np.zeros(0, dtype=np.int64)
            rx_in_micro = True
        else:
            rx_ids = _aligned_cover(partition, rx_rect, "RX")
            rx_in_micro = False
        return RunContext.build(
            partition,
            diffusion=self.diffusion,
            dt=self.dt_micro,
            t_final=self.t_final,
            t_ob=self.t_ob,
            n_obs=self.n_obs,
            capacity=self.molecules,
            rx_ids=rx_ids,
            rx_rect=np.array([rx_rect.x0, rx_rect.y0, rx_rect.x1, rx_rect.y1]),
            rx_in_micro=rx_in_micro,
            rebuild_every=self.rebuild_every,
        )

    def initial_state(self, ctx: RunContext, rng: np.random.Generator) -> RealizationState:
        state = new_state(ctx, rng)
        if self.test == "impulsive":
            _impulsive_init(self, state, rng)
        else:
            _uniform_init(self, state, rng)
        finalize_init(state)
        return state


def _aligned_cover(partition: Partition, rect: Rect, label: str) -> np.ndarray:
    """Subvolume ids exactly tiling ``rect``; error if the mesh misaligns."""
    ox = np.minimum(rect.x1, partition.origins[:, 0] + partition.widths) \
        - np.maximum(rect.x0, partition.origins[:, 0])
    oy = np.minimum(rect.y1, partition.origins[:, 1] + partition.widths) \
        - np.maximum(rect.y0, partition.origins[:, 1])
    touching = (ox > TILE_TOL) & (oy > TILE_TOL)
    contained = (
        (partition.origins[:, 0] >= rect.x0 - TILE_TOL)
        & (partition.origins[:, 0] + partition.widths <= rect.x1 + TILE_TOL)
        & (partition.origins[:, 1] >= rect.y0 - TILE_TOL)
        & (partition.origins[:, 1] + partition.widths <= rect.y1 + TILE_TOL)
    )
    if (touching & ~contained).any():
        raise GeometryError(
            f"{label} square {rect} is not aligned with the subvolume mesh"
        )
    ids = np.nonzero(touching)[0].astype(np.int64)
    area = float((partition.widths[ids] ** 2).sum())
    if abs(area - rect.area) > 1e-9 * rect.area:
        raise GeometryError(
            f"{label} square {rect} is not fully covered by subvolumes"
        )
    return ids


def _impulsive_init(config: ScenarioConfig, state: RealizationState,
                    rng: np.random.Generator) -> None:
    """All molecules start in the TX square."""
    partition = state.ctx.partition
    tx_rect = _unit_square(TX_CENTER)
    region, sv = locate(partition, *TX_CENTER)
    if sv < 0:
        pts = place_uniform(tx_rect, config.molecules, rng)
        state.positions[: config.molecules] = pts
        state.istate[I_NMOL] = config.molecules
        return
    ids = _aligned_cover(partition, tx_rect, "TX")
    if ids.size != 1:
        raise GeometryError(
            f"TX square {tx_rect} must coincide with a single subvolume, "
            f"found {ids.size}"
        )
    state.counts[ids[0]] = config.molecules


def _uniform_init(config: ScenarioConfig, state: RealizationState,
                  rng: np.random.Generator) -> None:
    """Molecules i.i.d. uniform over the whole environment."""
    partition = state.ctx.partition
    pts = place_uniform(ENV_RECT, config.molecules, rng)
    n_micro = 0
    for i in range(config.molecules):
        x, y = float(pts[i, 0]), float(pts[i, 1])
        region, sv = locate(partition, x, y)
        if sv < 0:
            state.positions[n_micro, 0] = x
            state.positions[n_micro, 1] = y
            n_micro += 1
        else:
            state.counts[sv] += 1
    state.istate[I_NMOL] = n_micro


###############################################################################
# Presets and config files
###############################################################################


def builtin_config(name: str, **overrides) -> ScenarioConfig:
    """Resolve a preset name like ``impulsive-meso-ms`` or ``uniform-hyb-full``."""
    tail = name
    full = tail.endswith("-full")
    if full:
        tail = tail[: -len("-full")]
    test, sep, model = tail.partition("-")
    if not sep or test not in TESTS or model not in MODELS:
        raise ValueError(
            f"unknown scenario {name!r}; builtin names are {', '.join(BUILTIN_NAMES)}"
        )
    molecules, t_final, desk, full_realizations = TESTS[test]
    base = ScenarioConfig(
        model=model,
        test=test,
        molecules=molecules,
        t_final=t_final,
        realizations=full_realizations if full else desk,
    )
    return replace(base, **overrides) if overrides else base


_CONFIG_KEYS = {
    "model": str,
    "test": str,
    "molecules": int,
    "t_final": float,
    "t_ob": float,
    "realizations": int,
    "seed": int,
    "diffusion": float,
    "dt_micro": float,
    "rebuild_every": int,
    "record_final": None,  # parsed as bool below
    "zone1": None,
    "zone2": None,
    "zone3": None,
}


def _parse_zone(text: str) -> tuple[str, float]:
    if text.strip().lower() == "micro":
        return ("micro", 0.0)
    return ("meso", float(text))


def parse_config_file(path) -> ScenarioConfig:
    """Read a flat ``key = value`` scenario file.

    Keys mirror :class:`ScenarioConfig`; ``zone1``..``zone3`` take either
    ``micro`` or a mesoscopic subvolume width and imply ``model = custom``.
    Lines starting with ``#`` and blank lines are ignored.
    """
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            for sep in ("=", ":"):
                if sep in text:
                    key, _, value = text.partition(sep)
                    break
            else:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key = key.strip().lower()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            raw[key] = value.strip()

    kwargs = {}
    zones = {}
    for key, value in raw.items():
        if key.startswith("zone"):
            zones[int(key[4:])] = _parse_zone(value)
        elif key == "record_final":
            kwargs[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            caster = _CONFIG_KEYS[key]
            kwargs[key] = caster(value)

    if zones:
        if sorted(zones) != [1, 2, 3]:
            raise ValueError(f"{path}: zone1, zone2 and zone3 must all be given")
        kwargs["zones"] = tuple(zones[k] for k in (1, 2, 3))
        kwargs.setdefault("model", "custom")

    if "test" not in kwargs:
        raise ValueError(f"{path}: missing required key 'test'")
    if "model" not in kwargs:
        raise ValueError(f"{path}: missing required key 'model'")
    molecules, t_final, desk, _ = TESTS.get(kwargs["test"], (None, None, None, None))
    kwargs.setdefault("molecules", molecules)
    kwargs.setdefault("t_final", t_final)
    kwargs.setdefault("realizations", desk)
    if kwargs["molecules"] is None:
        raise ValueError(f"{path}: unknown test and no molecule count given")
    return ScenarioConfig(**kwargs)


def events_per_molecule_time(micro_events: int, meso_events: int,
                             molecules: int, t_final: float) -> tuple[float, float]:
    """Event counters normalized per molecule per unit time."""
    if molecules < 1:
        raise ValueError("molecule count must be positive")
    if not t_final > 0.0:
        raise ValueError("t_final must be positive")
    span = molecules * t_final
    return micro_events / span, meso_events / span
