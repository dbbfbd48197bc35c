import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safetyscore.defaults import PROFILES
from safetyscore.io import regressor_from_coefficients
from safetyscore.latency import ConversionTable, LatencyCoefficients, RoiSpec
from safetyscore.planning import ResourcePlan, enumerate_plans
from safetyscore.response import AccumulationFn, DependencyGraph, ModuleSpec
from safetyscore.rss import DrivingState, ObstacleState, ScenarioMode, ScoreWeights
from safetyscore.simulate import (
    FrameRecord,
    MachineSpec,
    RunReport,
    ScheduleError,
    TraceConfig,
    aggregate,
    check_trace,
    compare_metrics,
    cpu_gpu_plan,
    edp,
    generate_trace,
    plan_match_rate,
    plan_scores,
    run_config,
    run_managed,
    run_static,
    schedule,
    simulate_frame,
    SystemModel,
)
from safetyscore.validation import DataError

from conftest import WEIGHTS

ROI = RoiSpec()
BOTH = frozenset({0, 1})


def tiny_model(e_values, edges=(), conversion=None, acc=None, gpu=False, critical=None):
    names = [f"M{i}" for i in range(len(e_values))]
    mods = tuple(ModuleSpec(n, supported_resources=BOTH if gpu else frozenset({0}),
                            accumulation=(acc or {}).get(n, AccumulationFn(0.1, 1, 1))) for n in names)
    g = DependencyGraph(mods, tuple(edges))
    reg = regressor_from_coefficients([LatencyCoefficients.zeros(ROI.dim, e) for e in e_values])
    return SystemModel(g, ROI, reg, ConversionTable(conversion or {}), {}, critical or names)


def empty_frame(distance=100.0):
    return FrameRecord(0, 0.0, [], DrivingState(10, 2, 4), ObstacleState(10, 2, 4, 8, 0.5),
                       ScenarioMode.SAME_DIRECTION, distance)


def test_single_module_response_time():
    model = tiny_model([0.05], acc={"M0": AccumulationFn(0.02, 1.0, 3.0)})
    res = simulate_frame(empty_frame(), ResourcePlan((0,), ("M0",)), model, MachineSpec(cpu_slots=1), WEIGHTS)
    assert res.t == pytest.approx(0.02 + 3 * 0.03)
    assert res.latencies == pytest.approx((0.05,))


def test_contention_and_priority():
    model = tiny_model([0.03, 0.05])
    frame = empty_frame()
    two = simulate_frame(frame, ResourcePlan((0, 0), ("M0", "M1")), model, MachineSpec(cpu_slots=2), WEIGHTS)
    assert two.latencies == pytest.approx((0.03, 0.05))
    one = simulate_frame(frame, ResourcePlan((0, 0), ("M0", "M1")), model, MachineSpec(cpu_slots=1), WEIGHTS)
    assert one.latencies == pytest.approx((0.03, 0.08))
    flipped = simulate_frame(frame, ResourcePlan((0, 0), ("M1", "M0")), model, MachineSpec(cpu_slots=1), WEIGHTS)
    assert flipped.latencies == pytest.approx((0.08, 0.05))


def test_gpu_conversion_applies():
    model = tiny_model([0.05], conversion={("M0", 1): 0.2}, gpu=True)
    res = simulate_frame(empty_frame(), ResourcePlan((1,), ("M0",)), model, MachineSpec(), WEIGHTS)
    assert res.latencies[0] == pytest.approx(0.01)
    assert res.resources == (1,)


def test_unschedulable_resource():
    g = DependencyGraph((ModuleSpec("A", supported_resources=frozenset({0, 2})),), ())
    with pytest.raises(ScheduleError):
        schedule({"A": 0.1}, {"A": 2}, g, ["A"], MachineSpec())


def test_unsafe_frame_has_zero_window():
    model = tiny_model([0.05])
    res = simulate_frame(empty_frame(distance=0.0), ResourcePlan((0,), ("M0",)), model, MachineSpec(), WEIGHTS)
    assert res.theta == 0.0 and res.score < 0


def test_edp_examples():
    empty = RunReport("x", "id", ["M0"], [])
    assert edp(empty, MachineSpec()) == (0.0, 0.0)
    model = tiny_model([0.1])
    machine = MachineSpec(power={0: 100.0, 1: 150.0})
    rep = run_static([empty_frame()], ResourcePlan((0,), ("M0",)), model, machine, WEIGHTS)
    energy, value = edp(rep, machine)
    assert energy == pytest.approx(10.0)
    assert value == pytest.approx(10.0 * 0.1)
    with pytest.raises(KeyError):
        edp(rep, MachineSpec(power={1: 10.0}))


def test_edp_ordering_two_configs():
    model = tiny_model([0.1], conversion={("M0", 1): 0.2}, gpu=True)
    machine = MachineSpec(power={0: 65.0, 1: 150.0})
    cpu = run_static([empty_frame()], ResourcePlan((0,), ("M0",)), model, machine, WEIGHTS)
    gpu = run_static([empty_frame()], ResourcePlan((1,), ("M0",)), model, machine, WEIGHTS)
    # 65 W * 0.1 s * 0.1 s versus 150 W * 0.02 s * 0.02 s
    assert edp(cpu, machine)[1] == pytest.approx(0.65)
    assert edp(gpu, machine)[1] == pytest.approx(0.06)


def test_generator_determinism_and_zero_intensity(graph):
    cfg = TraceConfig(frames=50, profiles=PROFILES)
    a, b = generate_trace(cfg, 5, graph), generate_trace(cfg, 5, graph)
    assert [f.to_dict() for f in a] == [f.to_dict() for f in b]
    assert generate_trace(cfg, 6, graph)[0].to_dict() != a[0].to_dict()
    check_trace(a)
    quiet = generate_trace(TraceConfig(frames=20, intensity=0.0), 1, graph)
    assert all(not f.obstacles for f in quiet)
    with pytest.raises(ValueError):
        generate_trace(TraceConfig(frames=0), 1, graph)


def test_burst_doubles_near_field_counts(graph):
    near = ROI.near_field(12.0)
    def mean_near(rate):
        cfg = TraceConfig(frames=3000, burst_factor=2.0, burst_rate=rate, burst_length=1e12)
        trace = generate_trace(cfg, 3, DependencyGraph((ModuleSpec("A"),), ()))
        X = np.vstack([_fine(f) for f in trace])
        return X[:, near].sum(axis=1).mean()
    ratio = mean_near(1.0) / mean_near(0.0)
    assert ratio == pytest.approx(2.0, rel=0.05)


def _fine(frame):
    from safetyscore.latency import build_density_vector
    return build_density_vector(frame.obstacles, ROI)[: ROI.n_fine]


def test_run_config_examples(small_trace, small_model, small_store):
    store, plans, scores = small_store
    machine = MachineSpec()
    empty = run_config([], "cpu", small_model)
    assert empty.frames == [] and empty.aggregates["frames"] == 0
    with pytest.raises(DataError):
        run_config(small_trace, "managed", small_model, machine, WEIGHTS, None)
    cpu = run_config(small_trace, "cpu", small_model, machine, WEIGHTS)
    assert all(set(f.resources) == {0} for f in cpu.frames)
    hybrid = run_config(small_trace, "cpu-gpu", small_model, machine, WEIGHTS)
    assert hybrid.frames[0].plan == cpu_gpu_plan(small_model).label()
    # Classification is the only deep-learning module
    assert cpu_gpu_plan(small_model).label() == "0000001000"


def test_managed_without_trigger_equals_initial_static(small_trace, small_model, small_store):
    store = small_store[0]
    machine = MachineSpec()
    managed = run_managed(small_trace, small_model, machine, WEIGHTS, store, h=math.inf)
    static = run_static(small_trace, store.default_plan, small_model, machine, WEIGHTS)
    assert [f.to_dict() for f in managed.frames] == [f.to_dict() for f in static.frames]
    assert managed.aggregates == static.aggregates


def test_managed_not_below_best_static(small_trace, small_model, small_store):
    store, plans, scores = small_store
    managed = run_config(small_trace, "managed", small_model, MachineSpec(), WEIGHTS, store)
    assert managed.aggregates["mean_score"] >= scores.mean(axis=0).max() - 1e-12
    rate = plan_match_rate(managed, plans, scores)
    assert 0.0 <= rate <= 1.0


def test_switch_penalty_lands_on_next_frame(small_trace, small_model, small_store):
    store = small_store[0]
    machine = MachineSpec()
    fast = run_managed(small_trace, small_model, machine, WEIGHTS, store, h=1)
    slow = run_managed(small_trace, small_model, machine, WEIGHTS, store, h=1, switch_penalty=0.5)
    switched = [i for i in range(1, len(fast.frames)) if fast.frames[i].plan != fast.frames[i - 1].plan]
    for i in switched:
        assert slow.frames[i].t == pytest.approx(fast.frames[i].t + 0.5)


def test_aggregates_recomputable(small_trace, small_model):
    machine = MachineSpec()
    rep = run_config(small_trace, "cpu-gpu", small_model, machine, WEIGHTS)
    again = RunReport.from_dict(rep.to_dict())
    assert aggregate(again, machine) == rep.aggregates
    t = rep.column("t")
    assert rep.aggregates["p99_t"] == pytest.approx(np.percentile(t, 99))


def test_compare_examples(small_trace, small_model):
    machine = MachineSpec()
    rep = run_config(small_trace, "cpu", small_model, machine, WEIGHTS)
    cmp = compare_metrics({"a": rep, "b": rep})
    assert set(cmp.best.values()) == {"a"}
    other = run_config(small_trace, "cpu-gpu", small_model, machine, WEIGHTS)
    cmp = compare_metrics({"cpu": rep, "gpu": other})
    for m, col in cmp.normalized.items():
        assert max(col) == pytest.approx(1.0)
        assert col[cmp.labels.index(cmp.best[m])] == pytest.approx(1.0)
    with pytest.raises(DataError):
        compare_metrics({"a": rep})
    foreign = RunReport("x", "elsewhere", rep.modules, rep.frames, rep.aggregates)
    with pytest.raises(DataError):
        compare_metrics({"a": rep, "b": foreign})


def test_compare_constructed_divergence():
    """Plan X wins p95 but has one slow frame at a tight window; safety picks Y."""
    from safetyscore.rss import QuadCoefficients, safety_score
    from safetyscore.simulate import FrameResult

    q, w = QuadCoefficients(1.5, 15.0, 0.0), ScoreWeights()
    thetas = [0.2] + [1.0] * 59

    def report(label, ts):
        rows = [FrameResult(i, label, (t,), (t,), (0,), t, th, safety_score(t, th, q, w))
                for i, (t, th) in enumerate(zip(ts, thetas))]
        rep = RunReport(label, "same", ["M0"], rows)
        rep.aggregates = aggregate(rep, MachineSpec())
        return rep

    x = report("X", [1.0] + [0.1] * 59)
    y = report("Y", [0.15] + [0.12] * 59)
    cmp = compare_metrics({"X": x, "Y": y})
    assert cmp.best["p95"] == "X" and cmp.best["avg"] == "X"
    assert cmp.best["safety"] == "Y" and cmp.best["max"] == "Y"


# -- properties ------------------------------------------------------------


@st.composite
def dags(draw):
    n = draw(st.integers(1, 6))
    names = [f"N{i}" for i in range(n)]
    edges = [(names[i], names[j]) for i in range(n) for j in range(i + 1, n) if draw(st.booleans())]
    compute = {nm: draw(st.floats(0.001, 0.2)) for nm in names}
    resource = {nm: draw(st.sampled_from([0, 1])) for nm in names}
    order = draw(st.permutations(names))
    return DependencyGraph(tuple(ModuleSpec(nm, supported_resources=BOTH) for nm in names), tuple(edges)), \
        compute, resource, order


@settings(max_examples=150)
@given(dags(), st.integers(1, 3), st.integers(1, 2))
def test_schedule_conservation(case, cpu, gpu):
    g, compute, resource, order = case
    ready, start, finish = schedule(compute, resource, g, order, MachineSpec(cpu_slots=cpu, gpu_slots=gpu))
    assert set(finish) == set(g.names)
    preds = g.predecessors()
    for n in g.names:
        assert start[n] >= max((finish[p] for p in preds[n]), default=0.0) - 1e-12
        assert ready[n] == max((finish[p] for p in preds[n]), default=0.0)
        assert finish[n] == pytest.approx(start[n] + compute[n])
    # slot capacity is never exceeded
    for r, cap in MachineSpec(cpu_slots=cpu, gpu_slots=gpu).slots().items():
        for n in g.names:
            if resource[n] == r:
                t = start[n]
                busy = sum(1 for m in g.names if resource[m] == r and start[m] <= t < finish[m])
                assert busy <= cap


@settings(max_examples=150)
@given(dags())
def test_unlimited_slots_have_no_queueing(case):
    g, compute, resource, order = case
    ready, start, finish = schedule(compute, resource, g, order, MachineSpec(cpu_slots=8, gpu_slots=8))
    for n in g.names:
        assert finish[n] - ready[n] == pytest.approx(compute[n])


@settings(max_examples=150)
@given(dags())
def test_independent_modules_more_slots_never_slower(case):
    g, compute, resource, order = case
    g = DependencyGraph(g.modules, ())
    one = schedule(compute, resource, g, order, MachineSpec(cpu_slots=1, gpu_slots=1))
    two = schedule(compute, resource, g, order, MachineSpec(cpu_slots=2, gpu_slots=2))
    for n in g.names:
        assert two[2][n] - two[0][n] <= one[2][n] - one[0][n] + 1e-12
