"""Command-line interface and batch orchestration.

Three subcommands:

``msdiff run <scenario>``
    Execute a built-in scenario (``impulsive-meso``, ``uniform-hyb-ms``,
    ..., with ``-full`` variants) or a ``key = value`` config file.
    Writes ``observations.csv``, ``events.json`` and ``manifest.json``.

``msdiff analytic``
    Write the closed-form impulse-response curve as ``analytic.csv``.

``msdiff validate <scenario>``
    Build the partition, print the subvolume inventory, exit non-zero if
    the region layout is invalid.

Realizations are independent: realization i always uses the generator
keyed by (seed, i), so ``--parallel N`` changes wall time, never output
bytes.  The output directory defaults to the ``MSDIFF_OUT`` environment
variable when set.  Results never land on disk half-written: files are
assembled in memory and written only after every realization finished.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import aggregate, expected_rx_impulse
from .geometry import GeometryError, Partition
from .hybrid import RealizationResult, run_realization
from .scenarios import (
    BUILTIN_NAMES,
    ScenarioConfig,
    builtin_config,
    events_per_molecule_time,
    parse_config_file,
)

__all__ = ["main", "run_batch", "load_scenario"]

_RNG_SCHEME = "philox4x32 keyed by (seed, realization_index)"


def load_scenario(spec: str, **overrides) -> ScenarioConfig:
    """Resolve a scenario argument: builtin preset name or config file path."""
    try:
        return builtin_config(spec, **overrides)
    except ValueError:
        if Path(spec).is_file():
            config = parse_config_file(spec)
            if overrides:
                from dataclasses import replace

                config = replace(config, **overrides)
            return config
        raise ValueError(
            f"{spec!r} is neither a builtin scenario nor a config file; "
            f"builtin names: {', '.join(BUILTIN_NAMES)}"
        )


###############################################################################
# Batch execution
###############################################################################

# Worker state handed to forked pool processes.
_WORK: tuple[ScenarioConfig, Partition, int] | None = None


def _run_index(index: int) -> RealizationResult:
    config, partition, seed = _WORK
    return run_realization(config, partition, seed, stream=index)


def run_batch(config: ScenarioConfig, partition: Partition,
              parallel: int = 1) -> list[RealizationResult]:
    """Run every realization of a scenario; results ordered by index."""
    global _WORK
    _WORK = (config, partition, config.seed)
    indices = range(config.realizations)
    try:
        if parallel <= 1:
            return [_run_index(i) for i in indices]
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_run_index, indices, chunksize=8))
    finally:
        _WORK = None


def _fmt(value: float) -> str:
    # Full round-trip decimal form, so rewriting the file reproduces the
    # exact same bytes.
    return repr(float(value))


def _observations_csv(times, mean, stderr, realizations: int) -> str:
    lines = ["time,mean_rx,stderr_rx,n_realizations"]
    for t, m, s in zip(times, mean, stderr):
        lines.append(f"{_fmt(t)},{_fmt(m)},{_fmt(s)},{realizations}")
    return "\n".join(lines) + "\n"


def _events_json(config: ScenarioConfig, results) -> dict:
    micro_total = int(sum(r.micro_events for r in results))
    meso_total = int(sum(r.meso_events for r in results))
    micro_rate, meso_rate = events_per_molecule_time(
        micro_total, meso_total,
        config.molecules, config.t_final * len(results),
    )
    violations = sum(
        1 for r in results if not (r.totals == config.molecules).all()
    )
    return {
        "micro_events": micro_total,
        "meso_events": meso_total,
        "micro_rate": micro_rate,
        "meso_rate": meso_rate,
        "molecules": config.molecules,
        "realizations": len(results),
        "t_final": config.t_final,
        "conservation_violations": int(violations),
    }


def _write_outputs(out_dir: Path, files: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")


def _resolve_out(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("MSDIFF_OUT")
    return Path(env) if env else Path("msdiff-out")


###############################################################################
# Subcommands
###############################################################################


def _cmd_run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.realizations is not None:
        overrides["realizations"] = args.realizations
    if args.molecules is not None:
        overrides["molecules"] = args.molecules
    if args.t_final is not None:
        overrides["t_final"] = args.t_final
    config = load_scenario(args.scenario, **overrides)
    partition = config.build_partition()

    started = time.perf_counter()
    results = run_batch(config, partition, parallel=args.parallel)
    elapsed = time.perf_counter() - started

    times = config.observation_times
    mean, stderr = aggregate([r.rx for r in results])
    events = _events_json(config, results)
    manifest = {
        "scenario": args.scenario,
        "config": asdict(config),
        "seed": config.seed,
        "realizations": config.realizations,
        "parallel": args.parallel,
        "rng": _RNG_SCHEME,
        "subvolumes": int(partition.n_subvolumes),
        "events": events,
        "outputs": ["observations.csv", "events.json", "manifest.json"],
        "wall_clock_seconds": elapsed,
        "version": __version__,
    }
    out_dir = _resolve_out(args.out)
    _write_outputs(out_dir, {
        "observations.csv": _observations_csv(times, mean, stderr, len(results)),
        "events.json": json.dumps(events, indent=2, sort_keys=True) + "\n",
        "manifest.json": json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    })
    print(f"{args.scenario}: {config.realizations} realizations in {elapsed:.1f}s "
          f"-> {out_dir}")
    print(f"events per molecule per time: micro {events['micro_rate']:.3f}, "
          f"meso {events['meso_rate']:.3f}")
    return 0


def _cmd_analytic(args) -> int:
    if args.t_max <= 0 or args.t_ob <= 0:
        raise ValueError("t-max and t-ob must be positive")
    n = int(np.floor(args.t_max / args.t_ob + 1e-9))
    times = args.t_ob * np.arange(1, n + 1, dtype=np.float64)
    curve = expected_rx_impulse(times, args.molecules, args.distance, args.diffusion)
    lines = ["time,expected_rx"]
    for t, v in zip(times, curve):
        lines.append(f"{_fmt(t)},{_fmt(v)}")
    out_dir = _resolve_out(args.out)
    _write_outputs(out_dir, {"analytic.csv": "\n".join(lines) + "\n"})
    print(f"analytic curve ({n} points) -> {out_dir / 'analytic.csv'}")
    return 0


def _cmd_validate(args) -> int:
    config = load_scenario(args.scenario)
    partition = config.build_partition()
    print(f"environment {partition.env.width:g} x {partition.env.height:g}, "
          f"{len(partition.regions)} regions, {partition.n_subvolumes} subvolumes")
    for k, region in enumerate(partition.regions):
        count = int(partition.region_counts[k])
        n_iface = int(
            partition.iface_offsets[k + 1] - partition.iface_offsets[k]
        )
        if region.is_micro:
            print(f"  region {region.region_id}: microscopic")
        else:
            print(f"  region {region.region_id}: {count} subvolumes of width "
                  f"{region.subvolume_width:g}, {n_iface} on a hybrid interface")
    print(f"links: {partition.n_links} "
          f"({int((partition.link_dest < 0).sum())} virtual)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="msdiff",
        description="Multi-scale stochastic diffusion simulator",
    )
    parser.add_argument("--version", action="version", version=f"msdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write result files")
    p_run.add_argument("scenario", help="builtin scenario name or config file path")
    p_run.add_argument("--seed", type=int, default=None, help="master seed")
    p_run.add_argument("--realizations", type=int, default=None,
                       help="override the scenario's realization count")
    p_run.add_argument("--molecules", type=int, default=None,
                       help="override the scenario's molecule count")
    p_run.add_argument("--t-final", type=float, default=None,
                       help="override the scenario's end time")
    p_run.add_argument("--parallel", type=int, default=1,
                       help="worker processes (output is identical for any value)")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: $MSDIFF_OUT or ./msdiff-out)")
    p_run.set_defaults(func=_cmd_run)

    p_an = sub.add_parser("analytic", help="write the analytic impulse response")
    p_an.add_argument("--molecules", type=float, default=10_000.0)
    p_an.add_argument("--distance", type=float, default=7.0)
    p_an.add_argument("--diffusion", type=float, default=1.0)
    p_an.add_argument("--t-max", type=float, default=100.0)
    p_an.add_argument("--t-ob", type=float, default=1.0)
    p_an.add_argument("--out", default=None)
    p_an.set_defaults(func=_cmd_analytic)

    p_val = sub.add_parser("validate", help="check a scenario's region layout")
    p_val.add_argument("scenario", help="builtin scenario name or config file path")
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, GeometryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
