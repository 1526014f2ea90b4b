#!/usr/bin/env python3
"""Compare the compiled and pure-numpy kernel paths on one scenario.

The kernel module picks its implementation at import time from the
``MSDIFF_NUMBA`` environment variable, so each path runs in a fresh
subprocess.  Both consume the random stream in the same order, which the
script verifies by comparing ``observations.csv`` byte for byte before
reporting timings.

Each path runs ``--repeat`` times; the best wall-clock time of the batch
(taken from ``manifest.json``, so interpreter startup is excluded) is
reported.  The compiled path still pays the one-time numba cache load
inside its first batch, which is why repeats default to 2.
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path


def run_once(path_flag: str, out_dir: Path, args) -> float:
    cmd = [
        sys.executable, "-m", "msdiff.cli", "run", args.scenario,
        "--molecules", str(args.molecules),
        "--t-final", str(args.t_final),
        "--realizations", str(args.realizations),
        "--seed", str(args.seed),
        "--out", str(out_dir),
    ]
    env = dict(os.environ, MSDIFF_NUMBA=path_flag)
    started = time.perf_counter()
    subprocess.run(cmd, check=True, env=env, stdout=subprocess.DEVNULL)
    total = time.perf_counter() - started
    batch = json.loads((out_dir / "manifest.json").read_text())["wall_clock_seconds"]
    print(f"  MSDIFF_NUMBA={path_flag}: batch {batch:8.3f} s   "
          f"(process total {total:.3f} s)")
    return batch


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    # Meso-event-heavy default: the event loop is where compilation pays.
    # Micro-dominated runs spend their time in vectorized numpy either way.
    parser.add_argument("--scenario", default="impulsive-meso")
    parser.add_argument("--molecules", type=int, default=2000)
    parser.add_argument("--t-final", type=float, default=50.0)
    parser.add_argument("--realizations", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--repeat", type=int, default=2)
    args = parser.parse_args(argv)

    print(f"{args.scenario}: {args.realizations} realizations, "
          f"{args.molecules} molecules, t_final {args.t_final:g}")
    with tempfile.TemporaryDirectory() as tmp:
        best = {}
        outputs = {}
        for flag in ("1", "0"):
            times = []
            for k in range(args.repeat):
                out = Path(tmp) / f"n{flag}-{k}"
                times.append(run_once(flag, out, args))
                outputs[flag] = (out / "observations.csv").read_bytes()
            best[flag] = min(times)

        if outputs["1"] != outputs["0"]:
            print("MISMATCH: the two paths produced different observations")
            return 1
        print(f"outputs byte-identical; speedup {best['0'] / best['1']:.1f}x "
              f"(best of {args.repeat})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
