"""Acceptance suite: one test per shipped guarantee, at full desk scale.

Impulsive scenarios run 200 realizations, uniform scenarios 100; batches
are computed once and shared between criteria, so the whole module takes
roughly an hour on a single core.  ``pytest -m "not slow"`` skips it for
the fast development loop.

Statistical tolerances follow the targets the package promises: event
rates per molecule per unit time against their reference values, the
impulse-response curve against the closed-form free-space solution, and
the uniform test against the flat equilibrium profile.  Seeds are fixed,
so each check is deterministic.
"""

import re
import time

import numpy as np
import pytest

from msdiff.analytics import aggregate, curve_error, expected_rx_impulse
from msdiff.cli import main, run_batch
from msdiff.hybrid import make_rng
from msdiff.meso import (
    PropensityTable,
    sample_event_time,
    select_destination,
    transition_rate,
)
from msdiff.micro import advance_all
from msdiff.scenarios import builtin_config, events_per_molecule_time

pytestmark = pytest.mark.slow

DISTANCE = 7.0  # TX to RX center distance in the standard layout

_BATCHES = {}


def batch(name):
    """Run (once) and cache a builtin scenario at its desk realization count."""
    if name not in _BATCHES:
        config = builtin_config(name)
        partition = config.build_partition()
        _BATCHES[name] = (config, run_batch(config, partition))
    return _BATCHES[name]


def batch_rates(name):
    config, results = batch(name)
    micro = sum(r.micro_events for r in results)
    meso = sum(r.meso_events for r in results)
    return events_per_molecule_time(
        micro, meso, config.molecules, config.t_final * len(results))


def test_criterion_1_partition_counts(capsys):
    expected = {"meso": 1920, "meso-ms": 444, "hyb": 1680, "hyb-ms": 816}
    for model, count in expected.items():
        started = time.perf_counter()
        assert main(["validate", f"impulsive-{model}"]) == 0
        elapsed = time.perf_counter() - started
        reported = re.search(r"(\d+) subvolumes", capsys.readouterr().out)
        assert int(reported.group(1)) == count, model
        assert elapsed < 1.0, f"{model} partition took {elapsed:.2f}s"


def test_criterion_2_micro_event_rate_exact():
    config, results = batch("impulsive-micro")
    assert len(results) == 200
    micro_rate, meso_rate = batch_rates("impulsive-micro")
    # Every molecule steps once per dt = 0.25, so the rate is exactly 4.
    assert micro_rate == 4.0
    assert meso_rate == 0.0
    assert sum(r.meso_events for r in results) == 0


def test_criterion_3_meso_event_rates():
    targets = [
        ("impulsive-meso", 3.97, 0.02),
        ("uniform-meso", 3.91, 0.02),
        ("uniform-meso-ms", 0.892, 0.05),
        ("uniform-hyb-ms", 1.66, 0.05),
    ]
    for name, target, tol in targets:
        config, results = batch(name)
        assert len(results) >= 100
        _, meso_rate = batch_rates(name)
        assert abs(meso_rate - target) <= tol * target, \
            f"{name}: meso rate {meso_rate:.4f} vs {target} ± {tol:.0%}"


def test_criterion_4_impulse_response_accuracy():
    for name in ("impulsive-micro", "impulsive-meso", "impulsive-meso-ms"):
        config, results = batch(name)
        assert len(results) == 200
        times = config.observation_times
        mean, stderr = aggregate([r.rx for r in results])
        reference = expected_rx_impulse(times, config.molecules, DISTANCE,
                                        config.diffusion)
        mad, _ = curve_error(times, mean, reference, (5.0, 75.0))
        window = (times >= 5.0) & (times <= 75.0)
        pooled = float(np.sqrt(np.mean(stderr[window] ** 2)))
        assert mad <= max(0.5, 3.0 * pooled), \
            f"{name}: MAD {mad:.3f} vs max(0.5, {3 * pooled:.3f})"

        peak = int(np.argmax(mean))
        assert 9.0 <= times[peak] <= 16.0, \
            f"{name}: peak at t={times[peak]:g}"
        assert abs(mean[peak] - 23.90) <= 0.15 * 23.90, \
            f"{name}: peak height {mean[peak]:.2f}"


def test_criterion_5_uniform_stability():
    # Purely mesoscopic runs hold the equilibrium mean of 5; windows of 50
    # observation points tame per-point Poisson noise without hiding drift.
    for name in ("uniform-meso", "uniform-meso-ms"):
        config, results = batch(name)
        assert len(results) == 100
        mean, _ = aggregate([r.rx for r in results])
        windows = mean.reshape(-1, 50).mean(axis=1)
        assert windows.size == 40
        assert np.all(np.abs(windows - 5.0) <= 0.3), \
            f"{name}: window means {windows.min():.3f}..{windows.max():.3f}"

    # Hybrid runs settle below 5 (interface leakage) but must plateau.
    for name in ("uniform-hyb", "uniform-hyb-ms"):
        config, results = batch(name)
        times = config.observation_times
        mean, _ = aggregate([r.rx for r in results])
        plateau = float(mean[times >= 1000.0].mean())
        assert 4.5 <= plateau <= 5.0, f"{name}: plateau {plateau:.3f}"


def test_criterion_6_rate_formula_properties():
    rng = np.random.default_rng(20260814)
    for _ in range(1000):
        h_i, h_j = rng.uniform(0.1, 5.0, size=2)
        h_o = rng.uniform(0.0, min(h_i, h_j))
        d = rng.uniform(0.05, 10.0)
        k_ij = transition_rate(h_i, h_j, h_o, d)
        k_ji = transition_rate(h_j, h_i, h_o, d)
        assert k_ij * h_i**2 == pytest.approx(k_ji * h_j**2, rel=1e-12)
        # A face split anywhere contributes the same total rate.
        cut = rng.uniform(0.0, 1.0) * h_o
        assert k_ij == pytest.approx(
            transition_rate(h_i, h_j, cut, d)
            + transition_rate(h_i, h_j, h_o - cut, d),
            rel=1e-12, abs=1e-300)
        # Equal widths with full overlap collapse to D / h^2.
        h = rng.uniform(0.1, 5.0)
        assert transition_rate(h, h, h, d) == pytest.approx(d / h**2, rel=1e-12)


def test_criterion_7_engine_oracles():
    # Exponential waiting times: mean within 2% of 1/a_T over 1e5 draws.
    a_total = 5.0
    u1 = make_rng(2024).random(100_000)
    waits = np.array([sample_event_time(0.0, a_total, float(u)) for u in u1])
    assert abs(waits.mean() - 1.0 / a_total) <= 0.02 / a_total

    # Brownian steps: per-axis variance within 2% of 2 D dt over 1e5 steps.
    # One sweep of 1e5 molecules at the domain center; no wall is within
    # reach of a single step, so the kept positions are pure displacements.
    partition = builtin_config("impulsive-micro").build_partition()
    start = np.tile([24.0, 20.0], (100_000, 1))
    kept, transfers = advance_all(start, 1.0, 0.25, partition.env, partition,
                                  make_rng(2024, 1))
    assert not transfers and kept.shape == start.shape
    for axis in (0, 1):
        var = float((kept[:, axis] - start[:, axis]).var(ddof=1))
        assert abs(var - 0.5) <= 0.02 * 0.5, f"axis {axis}: {var:.4f}"

    # Die rolls on a fixed 3-link table: frequencies within 3 sigma of
    # link_rate / rate_sum over 1e5 draws.
    rates = np.array([2.0 / 3.0, 0.25, 1.0 / 6.0])
    table = PropensityTable(
        link_start=np.array([0, 3, 3, 3, 3], dtype=np.int64),
        link_dest=np.array([1, 2, 3], dtype=np.int64),
        link_rate=rates.copy(),
        rate_sum=np.array([rates.sum(), 0.0, 0.0, 0.0]),
        counts=np.array([7, 0, 0, 0], dtype=np.int64),
    )
    u3 = make_rng(2024, 2).random(100_000)
    hits = np.zeros(4, dtype=np.int64)
    for u in u3:
        _, dest = select_destination(table, 0, float(u))
        hits[dest] += 1
    for k in range(3):
        p = rates[k] / rates.sum()
        sigma = np.sqrt(u3.size * p * (1.0 - p))
        assert abs(hits[k + 1] - u3.size * p) <= 3.0 * sigma, \
            f"link {k}: {hits[k + 1]} vs {u3.size * p:.0f} ± {3 * sigma:.0f}"


def test_criterion_8_conservation_audit():
    names = [
        f"{test}-{model}"
        for test in ("impulsive", "uniform")
        for model in ("micro", "meso", "meso-ms", "hyb", "hyb-ms")
    ]
    for name in names:
        config, results = batch(name)
        for k, r in enumerate(results):
            assert r.totals.shape == (config.n_obs,)
            assert (r.totals == config.molecules).all(), \
                f"{name} realization {k} lost molecules"


def test_criterion_9_parallel_determinism(tmp_path):
    args = ["run", "impulsive-hyb-ms", "--molecules", "2000",
            "--t-final", "20", "--realizations", "6", "--seed", "4242"]
    outputs = []
    for label, parallel in (("a", 1), ("b", 3), ("c", 1)):
        out = tmp_path / label
        assert main([*args, "--parallel", str(parallel), "--out", str(out)]) == 0
        outputs.append((out / "observations.csv").read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0] == outputs[2]
