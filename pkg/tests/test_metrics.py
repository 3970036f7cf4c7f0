import random

import pytest

from uavcharge.core import InvalidParameterError, MbsDrone, Position
from uavcharge.metrics import queue_trace, residual_stats, stability_verdict
from uavcharge.powerctl import ArrivalModel, DppConfig
from uavcharge.simengine import Scenario, ScenarioSpec, UnitSnapshot, run


def snapshot_with(charger_energy=None, mbs_energy=None):
    return UnitSnapshot(
        unit=1, stage1_pairs=[], stage2_pairs=[],
        charger_energy=charger_energy or {}, mbs_energy=mbs_energy or {},
        charger_flows={}, mbs_flows={}, dropped=[],
    )


def test_residual_stats_all_full():
    snap = snapshot_with(charger_energy={f"C{i}": (100.0, 100.0) for i in range(4)})
    profile = residual_stats(snap, "charger")
    assert profile.values == [100.0] * 4
    assert profile.mean == 100.0
    assert profile.stddev == 0.0


def test_residual_stats_two_point():
    snap = snapshot_with(mbs_energy={"M0": (50.0, 100.0), "M1": (200.0, 200.0)})
    profile = residual_stats(snap, "mbs")
    assert profile.values == [50.0, 100.0]
    assert profile.mean == pytest.approx(75.0)
    assert profile.stddev == pytest.approx(25.0)


def test_residual_stats_single_entity():
    snap = snapshot_with(charger_energy={"C0": (30.0, 120.0)})
    profile = residual_stats(snap, "charger")
    assert profile.values == [25.0]
    assert profile.stddev == 0.0


def test_residual_stats_sorted_and_permutation_invariant():
    rng = random.Random(5)
    pairs = {f"C{i}": (rng.uniform(0, 100), 100.0) for i in range(10)}
    shuffled = dict(sorted(pairs.items(), key=lambda kv: rng.random()))
    a = residual_stats(snapshot_with(charger_energy=pairs), "charger")
    b = residual_stats(snapshot_with(charger_energy=shuffled), "charger")
    assert a == b
    assert a.values == sorted(a.values)


def test_residual_stats_scale_consistent():
    pairs = {f"C{i}": (10.0 * (i + 1), 200.0) for i in range(5)}
    doubled = {k: (2 * r, 2 * c) for k, (r, c) in pairs.items()}
    assert residual_stats(snapshot_with(charger_energy=pairs), "charger") == residual_stats(
        snapshot_with(charger_energy=doubled), "charger"
    )


def test_residual_stats_empty_role_rejected():
    with pytest.raises(InvalidParameterError):
        residual_stats(snapshot_with(), "charger")
    with pytest.raises(InvalidParameterError):
        residual_stats(snapshot_with(charger_energy={"C0": (1.0, 1.0)}), "pilot")


def test_queue_trace_shapes():
    spec = ScenarioSpec(seed=3, horizon=2, tower_count=0, charger_count=0, mbs_count=1,
                        mbs_hover_power_w=0.0)
    result = run(spec.build())
    trace = queue_trace(result, "M00")
    assert len(trace) == 2 * spec.timing.slots_per_unit
    assert trace[0] == (0, 0.0)
    with pytest.raises(KeyError):
        queue_trace(result, "M99")


def test_queue_trace_zero_arrivals_all_zero():
    scenario = Scenario(
        towers=[], chargers=[],
        mbs_drones=[MbsDrone("M0", Position(0, 0, 100), hover_power=0.0)],
        dpp=DppConfig(action_set=(0.0, 5.0), arrival=ArrivalModel("constant", 0.0)),
        horizon=2, seed=0,
    )
    result = run(scenario)
    assert all(q == 0.0 for _, q in queue_trace(result, "M0"))


def test_queue_trace_min_power_underserve_grows():
    # arrivals exceed what the minimum positive power can serve
    scenario = Scenario(
        towers=[], chargers=[],
        mbs_drones=[MbsDrone("M0", Position(0, 0, 100), capacity=1e7, residual=1e7, hover_power=0.0)],
        dpp=DppConfig(action_set=(0.0, 10.0), arrival=ArrivalModel("constant", 2e5)),
        power_policy="min_pa", horizon=2, seed=0,
    )
    backlogs = [q for _, q in queue_trace(run(scenario), "M0")]
    assert all(later > earlier for earlier, later in zip(backlogs, backlogs[1:]))


def test_queue_trace_max_power_bounded_by_arrivals():
    scenario = Scenario(
        towers=[], chargers=[],
        mbs_drones=[MbsDrone("M0", Position(0, 0, 100), capacity=1e7, residual=1e7, hover_power=0.0)],
        dpp=DppConfig(action_set=(0.0, 160.0), arrival=ArrivalModel("constant", 2e5)),
        power_policy="max_pa", horizon=2, seed=0,
    )
    backlogs = [q for _, q in queue_trace(run(scenario), "M0")]
    assert max(backlogs) <= 2e5  # each slot's carryover is fully served


def test_stability_verdict_constant_trace():
    verdict = stability_verdict([7.0] * 64)
    assert verdict.verdict == "stable"
    assert verdict.ratio == pytest.approx(1.0)


def test_stability_verdict_all_zero():
    verdict = stability_verdict([0.0] * 64)
    assert verdict.verdict == "stable"
    assert verdict.ratio == 1.0


def test_stability_verdict_linear_growth():
    # Q[t] = t: quarter means computed independently from the index runs.
    n = 400
    trace = [float(t) for t in range(n)]
    last = trace[300:]
    prev = trace[200:300]
    expected = (sum(last) / len(last)) / (sum(prev) / len(prev))
    verdict = stability_verdict(trace)
    assert verdict.ratio == pytest.approx(expected, rel=1e-12)
    assert verdict.ratio == pytest.approx(1.4, abs=0.01)
    assert verdict.verdict == "diverging"


def test_stability_verdict_trace_too_short():
    with pytest.raises(InvalidParameterError):
        stability_verdict([1.0] * 7)


def test_stability_verdict_split_bounds():
    with pytest.raises(InvalidParameterError):
        stability_verdict([1.0] * 16, split=0.0)
    with pytest.raises(InvalidParameterError):
        stability_verdict([1.0] * 16, split=0.6)


def test_stability_verdict_threshold_configurable():
    trace = [1.0] * 48 + [1.2] * 16
    assert stability_verdict(trace, threshold=1.10).verdict == "diverging"
    assert stability_verdict(trace, threshold=1.30).verdict == "stable"
