"""msdiff: multi-scale stochastic diffusion simulator on rectangular domains."""

from .analytics import aggregate, curve_error, expected_rx_impulse, impulse_peak
from .geometry import (
    Environment,
    GeometryError,
    Partition,
    Rect,
    Region,
    Ring,
    build_partition,
    interface_subvolumes,
    locate,
)
from .hybrid import RealizationResult, make_rng, run_realization
from .meso import new_table, transition_rate
from .scenarios import ScenarioConfig, builtin_config, parse_config_file

__version__ = "0.1.0"

__all__ = [
    "Environment",
    "GeometryError",
    "Partition",
    "Rect",
    "RealizationResult",
    "Region",
    "Ring",
    "ScenarioConfig",
    "aggregate",
    "build_partition",
    "builtin_config",
    "curve_error",
    "expected_rx_impulse",
    "impulse_peak",
    "interface_subvolumes",
    "locate",
    "make_rng",
    "new_table",
    "parse_config_file",
    "run_realization",
    "transition_rate",
    "__version__",
]
