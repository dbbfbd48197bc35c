"""Trace-driven simulation of the perception stack under resource plans."""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .latency import (
    BaselineLatencyRegressor,
    ConversionTable,
    LatencyCoefficients,
    RoiSpec,
    build_density_vector,
    feature_transform,
)
from .planning import (
    ClusterStore,
    ResourcePlan,
    TimeoutMonitor,
    critical_first_order,
    current_feature,
    match_cluster,
    monitor_step,
    timeout_pattern,
)
from .response import AccumulationFn, DependencyGraph, accumulate
from .rss import (
    AlreadyUnsafeError,
    DrivingState,
    ObstacleState,
    ScenarioMode,
    ScoreWeights,
    full_quad_coefficients,
    response_time_window,
    safety_score,
)
from .validation import DataError


class ScheduleError(RuntimeError):
    """A module cannot run on the machine (its resource has no slots)."""


class Policy(str, Enum):
    CPU_ONLY = "cpu"
    CPU_GPU_STATIC = "cpu-gpu"
    MANAGED = "managed"


@dataclass(frozen=True)
class MachineSpec:
    cpu_slots: int = 2
    gpu_slots: int = 1
    power: Mapping = field(default_factory=lambda: {0: 65.0, 1: 150.0})

    def __post_init__(self):
        if self.cpu_slots < 1 or self.gpu_slots < 1:
            raise ValueError("slot counts must be at least 1")
        object.__setattr__(self, "power", {int(k): float(v) for k, v in dict(self.power).items()})
        if any(p <= 0 for p in self.power.values()):
            raise ValueError("power must be positive")

    def slots(self) -> dict[int, int]:
        return {0: self.cpu_slots, 1: self.gpu_slots}


@dataclass
class FrameRecord:
    """One sensor frame of a trace.

    ``latencies`` are the module latencies measured on the baseline resource
    and ``response_time`` the measured system response time; both feed model
    fitting only.
    """

    frame: int
    timestamp: float
    obstacles: list
    av: DrivingState
    obstacle: ObstacleState
    mode: ScenarioMode
    distance: float
    latencies: dict = field(default_factory=dict)
    response_time: float | None = None

    def __post_init__(self):
        if not self.distance >= 0:
            raise DataError(f"frame {self.frame}: negative distance")

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "timestamp": self.timestamp,
            "obstacles": [list(p) for p in self.obstacles],
            "av": asdict(self.av),
            "obstacle": asdict(self.obstacle),
            "mode": ScenarioMode(self.mode).value,
            "distance": self.distance,
            "latencies": dict(self.latencies),
            "response_time": self.response_time,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            frame=int(d["frame"]),
            timestamp=float(d["timestamp"]),
            obstacles=[tuple(p) for p in d.get("obstacles", [])],
            av=DrivingState(**d["av"]),
            obstacle=ObstacleState(**d["obstacle"]),
            mode=ScenarioMode(d["mode"]),
            distance=float(d["distance"]),
            latencies={k: float(v) for k, v in d.get("latencies", {}).items()},
            response_time=d.get("response_time"),
        )


def check_trace(trace: Sequence[FrameRecord]):
    for prev, cur in zip(trace, trace[1:]):
        if not cur.timestamp > prev.timestamp:
            raise DataError(f"timestamps not strictly increasing at frame {cur.frame}")


def trace_digest(trace: Sequence[FrameRecord]) -> str:
    h = hashlib.sha256()
    for f in trace:
        h.update(json.dumps(f.to_dict(), sort_keys=True).encode())
    return h.hexdigest()[:16]


# --------------------------------------------------------------------------
# synthetic traces


@dataclass(frozen=True)
class ModuleProfile:
    """Ground-truth baseline latency shape of one module in the generator.

    Per-obstacle costs are spatially weighted: fine cells inside the
    near-field radius weigh ``near_weight`` times the rest (the trace-level
    setting when ``None``).
    """

    base: float = 0.005
    per_obstacle: float = 0.0002
    quad: float = 0.0
    total_quad: float = 0.0
    log_term: float = 0.0
    near_weight: float | None = None


@dataclass
class TraceConfig:
    frames: int = 2000
    interval: float = 0.1
    roi: RoiSpec = field(default_factory=RoiSpec)
    intensity: float = 0.12
    decay: float = 14.0
    near_radius: float = 12.0
    burst_factor: float = 3.0
    burst_rate: float = 0.004
    burst_length: float = 250.0
    burst_theta_scale: float = 0.7
    near_weight: float = 5.0
    latency_noise: float = 0.002
    response_noise: float = 0.001
    v_range: tuple = (5.0, 20.0)
    a_max_accel: float = 2.0
    a_min_brake: float = 4.0
    obstacle_v_range: tuple = (0.0, 20.0)
    obstacle_accel: float = 2.0
    obstacle_min_brake: float = 4.0
    obstacle_max_brake: float = 8.0
    obstacle_response: float = 0.5
    theta_range: tuple = (0.15, 0.9)
    opposing_fraction: float = 0.2
    mode_switch_rate: float = 0.002
    d_mu: float = 2.0
    profiles: dict = field(default_factory=dict)

    def validate(self):
        if self.frames < 1:
            raise ValueError("frames must be at least 1")
        if not self.interval > 0:
            raise ValueError("interval must be positive")
        if self.intensity < 0 or self.burst_factor < 0:
            raise ValueError("intensities must be non-negative")
        lo, hi = self.theta_range
        if not 0 < lo <= hi:
            raise ValueError("theta_range must satisfy 0 < lo <= hi")
        self.roi.validate()
        return self


def cell_intensity(cfg: TraceConfig, burst: bool = False) -> np.ndarray:
    """Expected obstacles per fine cell, decaying with distance from the AV."""
    centers = cfg.roi.fine_centers()
    lam = cfg.intensity * np.exp(-np.hypot(*centers.T) / cfg.decay)
    if burst:
        lam = np.where(cfg.roi.near_field(cfg.near_radius), lam * cfg.burst_factor, lam)
    return lam


def truth_coefficients(cfg: TraceConfig, profile: ModuleProfile) -> LatencyCoefficients:
    """Generator latency model expressed as count-feature coefficients."""
    roi = cfg.roi
    near = cfg.near_weight if profile.near_weight is None else profile.near_weight
    w = np.where(roi.near_field(cfg.near_radius), near, 1.0)
    coef = LatencyCoefficients.zeros(roi.dim, e=profile.base)
    coef.c[:roi.n_fine] = profile.per_obstacle * w
    coef.a[:roi.n_fine] = profile.quad * w
    coef.d[:roi.n_fine] = profile.log_term * w
    coef.a[-1] = profile.total_quad
    return coef


def generate_trace(cfg: TraceConfig, seed: int, graph: DependencyGraph) -> list[FrameRecord]:
    """Synthetic, seed-reproducible frame trace.

    Obstacles are Poisson per fine cell with intensity decaying away from the
    AV; rush-hour bursts (a two-state Markov chain) multiply near-field
    intensity by ``burst_factor`` and shrink the time headroom. Speeds and
    headroom follow bounded random walks; the gap to the obstacle-of-attention
    is the minimum safe distance at the sampled headroom.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    roi = cfg.roi
    lam = {False: cell_intensity(cfg, False), True: cell_intensity(cfg, True)}
    cw, cd = roi.fine_cell
    corners = roi.fine_centers() - np.array([cw / 2, cd / 2])
    truths = {m.name: truth_coefficients(cfg, cfg.profiles.get(m.name, ModuleProfile())) for m in graph.modules}
    truth_w = np.vstack([truths[n].vector() for n in graph.names])
    truth_e = np.array([truths[n].e for n in graph.names])

    burst = False
    mode = ScenarioMode.OPPOSING if rng.random() < cfg.opposing_fraction else ScenarioMode.SAME_DIRECTION
    v = rng.uniform(*cfg.v_range)
    v_o = rng.uniform(*cfg.obstacle_v_range)
    headroom = rng.uniform(*cfg.theta_range)
    leave = 1.0 / cfg.burst_length if cfg.burst_length > 0 else 1.0
    frames = []
    for i in range(cfg.frames):
        if burst:
            burst = rng.random() >= leave
        else:
            burst = rng.random() < cfg.burst_rate
        if rng.random() < cfg.mode_switch_rate:
            mode = ScenarioMode.OPPOSING if rng.random() < cfg.opposing_fraction else ScenarioMode.SAME_DIRECTION

        counts = rng.poisson(lam[burst])
        cell_idx = np.repeat(np.arange(roi.n_fine), counts)
        pts = corners[cell_idx] + rng.random((len(cell_idx), 2)) * np.array([cw, cd])
        pts = np.round(pts, 3)
        x = build_density_vector(pts, roi)

        v = float(np.clip(v + rng.normal(0, 0.3), *cfg.v_range))
        v_o = float(np.clip(v_o + rng.normal(0, 0.3), *cfg.obstacle_v_range))
        lo, hi = cfg.theta_range
        headroom = float(np.clip(headroom + rng.normal(0, 0.03), lo, hi))
        target = headroom * (cfg.burst_theta_scale if burst else 1.0)

        av = DrivingState(round(v, 4), cfg.a_max_accel, cfg.a_min_brake)
        obs = ObstacleState(round(v_o, 4), cfg.obstacle_accel, cfg.obstacle_min_brake,
                            cfg.obstacle_max_brake, cfg.obstacle_response)
        q = full_quad_coefficients(av, obs, mode, cfg.d_mu)
        d = max(q.distance(target), 0.0)

        tau = feature_transform(x, include_bias=False) @ truth_w.T + truth_e
        if cfg.latency_noise > 0:
            tau = tau + rng.normal(0, cfg.latency_noise, len(tau))
        tau = np.maximum(tau, 1e-4)
        resp = sum(accumulate(m.accumulation, t) for m, t in zip(graph.modules, tau))
        if cfg.response_noise > 0:
            resp += rng.normal(0, cfg.response_noise)

        frames.append(FrameRecord(
            frame=i,
            timestamp=round(i * cfg.interval, 9),
            obstacles=[tuple(p) for p in pts.tolist()],
            av=av,
            obstacle=obs,
            mode=mode,
            distance=round(d, 6),
            latencies={n: round(float(t), 9) for n, t in zip(graph.names, tau)},
            response_time=round(float(resp), 9),
        ))
    return frames


# --------------------------------------------------------------------------
# system model and per-frame simulation


@dataclass
class SystemModel:
    """Fitted artefacts the simulator needs for one dependency graph."""

    graph: DependencyGraph
    roi: RoiSpec
    regressor: BaselineLatencyRegressor
    conversion: ConversionTable
    accumulation: dict
    critical: list
    stats: dict = field(default_factory=dict)
    timeout_threshold: float = 0.1

    def density(self, frame: FrameRecord) -> np.ndarray:
        return build_density_vector(frame.obstacles, self.roi)

    def density_matrix(self, trace: Sequence[FrameRecord]) -> np.ndarray:
        if not trace:
            return np.zeros((0, self.roi.dim))
        return np.vstack([self.density(f) for f in trace])

    def baseline(self, X) -> np.ndarray:
        """Predicted baseline latency, ``(n_frames, n_modules)``."""
        out = self.regressor.predict(np.atleast_2d(X))
        return out.reshape(len(out), -1)

    def threshold_of(self, name: str) -> float:
        si = self.graph.module(name).sampling_interval
        return si if si is not None else self.timeout_threshold

    def accumulation_of(self, name: str) -> AccumulationFn:
        return self.accumulation.get(name) or self.graph.module(name).accumulation


def schedule(compute: Mapping[str, float], resource: Mapping[str, int], g: DependencyGraph,
             priority: Sequence[str], machine: MachineSpec):
    """Nonpreemptive list scheduling of one frame.

    A module becomes ready when all of its producers finish; whenever slots
    free up, ready modules are started in priority order on their assigned
    resource. Returns ``(ready, start, finish)`` dicts keyed by module.
    """
    slots = machine.slots()
    for n in g.names:
        if slots.get(resource[n], 0) < 1:
            raise ScheduleError(f"module {n!r} assigned to resource {resource[n]} with no slots")
    rank = {n: i for i, n in enumerate(priority)}
    preds = g.predecessors()
    succs: dict[str, list[str]] = {n: [] for n in g.names}
    for src, dst in g.edges:
        succs[src].append(dst)
    waiting = {n: len(preds[n]) for n in g.names}
    ready_at = {n: 0.0 for n in g.names if not preds[n]}
    ready = sorted(ready_at, key=rank.__getitem__)
    free = dict(slots)
    start, finish = {}, {}
    events: list = []
    now = 0.0
    while ready or events:
        still = []
        for n in ready:
            r = resource[n]
            if free[r] > 0:
                free[r] -= 1
                start[n] = now
                heapq.heappush(events, (now + compute[n], rank[n], n))
            else:
                still.append(n)
        ready = still
        now = events[0][0]
        while events and events[0][0] == now:
            _, _, n = heapq.heappop(events)
            finish[n] = now
            free[resource[n]] += 1
            for s in succs[n]:
                waiting[s] -= 1
                if waiting[s] == 0:
                    ready_at[s] = now
                    ready.append(s)
        ready.sort(key=rank.__getitem__)
    return ready_at, start, finish


@dataclass
class FrameResult:
    frame: int
    plan: str
    latencies: tuple
    compute: tuple
    resources: tuple
    t: float
    theta: float
    score: float
    timeout: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta"] = None if math.isinf(self.theta) else self.theta
        for k in ("latencies", "compute", "resources"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["theta"] = math.inf if d["theta"] is None else d["theta"]
        for k in ("latencies", "compute", "resources"):
            d[k] = tuple(d[k])
        return cls(**d)


def frame_theta(frame: FrameRecord, weights: ScoreWeights):
    """Response time window for a frame; a gap already below the constant
    term of the minimum distance gives ``theta = 0``."""
    q = full_quad_coefficients(frame.av, frame.obstacle, frame.mode, weights.d_mu)
    try:
        return q, response_time_window(frame.distance, q)
    except AlreadyUnsafeError:
        return q, 0.0


def simulate_frame(frame: FrameRecord, plan: ResourcePlan, model: SystemModel, machine: MachineSpec,
                   weights: ScoreWeights, baseline=None, penalty: float = 0.0,
                   theta_info=None) -> FrameResult:
    """Latencies, response time and safety score of one frame under ``plan``.

    ``baseline`` may carry precomputed baseline latencies (graph order);
    ``penalty`` is added to the response time (plan switch cost).
    """
    g = model.graph
    if baseline is None:
        baseline = model.baseline(model.density(frame))[0]
    res = plan.resource_of(g)
    compute = {n: float(tau) * model.conversion[(n, res[n])] for n, tau in zip(g.names, baseline)}
    ready, _, finish = schedule(compute, res, g, plan.priority, machine)
    lat = {n: finish[n] - ready[n] for n in g.names}
    t = penalty + sum(accumulate(model.accumulation_of(n), lat[n]) for n in model.critical)
    q, theta = theta_info if theta_info is not None else frame_theta(frame, weights)
    timeout = any(lat[n] > model.threshold_of(n) for n in model.critical)
    return FrameResult(
        frame=frame.frame,
        plan=plan.label(),
        latencies=tuple(lat[n] for n in g.names),
        compute=tuple(compute[n] for n in g.names),
        resources=tuple(res[n] for n in g.names),
        t=float(t),
        theta=float(theta),
        score=float(safety_score(t, theta, q, weights)),
        timeout=timeout,
    )


# --------------------------------------------------------------------------
# policies and reports


@dataclass
class RunReport:
    policy: str
    trace_id: str
    modules: list
    frames: list
    aggregates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "trace_id": self.trace_id,
            "modules": list(self.modules),
            "aggregates": self.aggregates,
            "frames": [f.to_dict() for f in self.frames],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["policy"], d["trace_id"], d["modules"],
                   [FrameResult.from_dict(f) for f in d["frames"]], d.get("aggregates", {}))

    def column(self, name) -> np.ndarray:
        return np.array([getattr(f, name) for f in self.frames], dtype=float)


def edp(report: RunReport, machine: MachineSpec) -> tuple[float, float]:
    """Energy (J) over all module executions and energy-delay product (J*s)."""
    if not report.frames:
        return 0.0, 0.0
    energy = 0.0
    for f in report.frames:
        for c, r in zip(f.compute, f.resources):
            if r not in machine.power:
                raise KeyError(f"no power entry for resource {r}")
            energy += machine.power[r] * c
    mean_t = float(np.mean(report.column("t")))
    return energy, energy * mean_t


def aggregate(report: RunReport, machine: MachineSpec) -> dict:
    if not report.frames:
        return {"frames": 0}
    t = report.column("t")
    energy, edp_value = edp(report, machine)
    return {
        "frames": len(report.frames),
        "mean_t": float(t.mean()),
        "max_t": float(t.max()),
        "p95_t": float(np.percentile(t, 95)),
        "p99_t": float(np.percentile(t, 99)),
        "mean_score": float(report.column("score").mean()),
        "timeouts": int(sum(f.timeout for f in report.frames)),
        "switches": int(sum(a.plan != b.plan for a, b in zip(report.frames, report.frames[1:]))),
        "energy": energy,
        "edp": edp_value,
    }


def cpu_only_plan(model: SystemModel) -> ResourcePlan:
    g = model.graph
    return ResourcePlan((0,) * len(g.modules), critical_first_order(g, model.critical))


def cpu_gpu_plan(model: SystemModel) -> ResourcePlan:
    """Native heterogeneous plan: deep-learning modules on GPU, priority by
    descending tail (p99) latency."""
    g = model.graph
    alloc = tuple(1 if (m.deep_learning and 1 in m.supported_resources) else 0 for m in g.modules)
    topo = g.topological_order()
    tail = {n: float(model.stats.get(n, {}).get("p99", 0.0)) for n in g.names}
    order = sorted(topo, key=lambda n: (-tail[n], topo.index(n)))
    return ResourcePlan(alloc, tuple(order))


def _precompute(trace, model, weights):
    X = model.density_matrix(trace)
    base = model.baseline(X) if len(trace) else np.zeros((0, len(model.graph.modules)))
    thetas = [frame_theta(f, weights) for f in trace]
    return X, base, thetas


def run_static(trace, plan: ResourcePlan, model: SystemModel, machine: MachineSpec,
               weights: ScoreWeights, policy: str = "static", pre=None) -> RunReport:
    plan.check(model.graph)
    X, base, thetas = pre if pre is not None else _precompute(trace, model, weights)
    frames = [simulate_frame(f, plan, model, machine, weights, base[i], theta_info=thetas[i])
              for i, f in enumerate(trace)]
    report = RunReport(policy, trace_digest(trace), model.graph.names, frames)
    report.aggregates = aggregate(report, machine)
    return report


def run_managed(trace, model: SystemModel, machine: MachineSpec, weights: ScoreWeights,
                store: ClusterStore, initial: ResourcePlan | None = None, h: float | None = None,
                switch_penalty: float = 0.0, pre=None) -> RunReport:
    """Online loop: monitor continuous timeouts, match a cluster on trigger and
    switch plans at the next frame boundary."""
    plan = initial or store.default_plan or cpu_gpu_plan(model)
    plan.check(model.graph)
    X, base, thetas = pre if pre is not None else _precompute(trace, model, weights)
    monitor = TimeoutMonitor(h=store.h if h is None else h)
    crit_idx = [model.graph.names.index(n) for n in model.critical]
    thresholds = np.array([model.threshold_of(n) for n in model.critical])
    runs = np.zeros(len(crit_idx))
    pending = None
    frames = []
    for i, f in enumerate(trace):
        penalty = 0.0
        if pending is not None:
            plan, pending, penalty = pending, None, switch_penalty
        res = simulate_frame(f, plan, model, machine, weights, base[i], penalty, theta_info=thetas[i])
        frames.append(res)
        lat = np.array(res.latencies)[crit_idx]
        hit = lat > thresholds
        runs = np.where(hit, runs + 1, 0)
        monitor, fired = monitor_step(monitor, bool(hit.any()))
        if fired:
            feat = current_feature(X[i], timeout_pattern(runs, store.k_dim), store.scaling)
            _, matched = match_cluster(store, feat)
            if matched != plan:
                pending = matched
    report = RunReport(Policy.MANAGED.value, trace_digest(trace), model.graph.names, frames)
    report.aggregates = aggregate(report, machine)
    return report


def run_config(trace, policy, model: SystemModel | None, machine: MachineSpec | None = None,
               weights: ScoreWeights | None = None, store: ClusterStore | None = None,
               **managed_kw) -> RunReport:
    """Simulate a whole trace under one of the three configurations."""
    policy = Policy(policy)
    machine = machine or MachineSpec()
    weights = weights or ScoreWeights()
    if not trace:
        return RunReport(policy.value, trace_digest(trace), model.graph.names if model else [], [], {"frames": 0})
    if model is None:
        raise DataError("a fitted model is required")
    if policy is Policy.CPU_ONLY:
        return run_static(trace, cpu_only_plan(model), model, machine, weights, policy.value)
    if policy is Policy.CPU_GPU_STATIC:
        return run_static(trace, cpu_gpu_plan(model), model, machine, weights, policy.value)
    if store is None:
        raise DataError("managed policy requires a cluster store")
    return run_managed(trace, model, machine, weights, store, **managed_kw)


# --------------------------------------------------------------------------
# offline-planning inputs from a trace


def trace_timeout_patterns(trace, model: SystemModel) -> np.ndarray:
    """Continuous-timeout run lengths per critical module from measured latencies."""
    thresholds = np.array([model.threshold_of(n) for n in model.critical])
    runs = np.zeros(len(model.critical))
    out = np.zeros((len(trace), len(model.critical)))
    for i, f in enumerate(trace):
        lat = np.array([f.latencies[n] for n in model.critical])
        runs = np.where(lat > thresholds, runs + 1, 0)
        out[i] = timeout_pattern(runs)
    return out


def plan_scores(trace, plans: Sequence[ResourcePlan], model: SystemModel, machine: MachineSpec,
                weights: ScoreWeights, pre=None) -> np.ndarray:
    """``(n_frames, n_plans)`` safety scores, the offline search objective."""
    X, base, thetas = pre if pre is not None else _precompute(trace, model, weights)
    scores = np.empty((len(trace), len(plans)))
    for j, p in enumerate(plans):
        p.check(model.graph)
        for i, f in enumerate(trace):
            scores[i, j] = simulate_frame(f, p, model, machine, weights, base[i], theta_info=thetas[i]).score
    return scores


def plan_match_rate(report: RunReport, plans: Sequence[ResourcePlan], scores: np.ndarray) -> float:
    """Fraction of frames whose executed plan is the frame's best-scoring plan.

    ``scores`` is the ``(n_frames, n_plans)`` matrix from :func:`plan_scores`
    over the same trace.
    """
    if not report.frames:
        return 1.0
    if len(scores) != len(report.frames):
        raise DataError("score matrix does not match the report")
    best = np.argmax(np.asarray(scores), axis=1)
    hits = sum(f.plan == plans[b].label() for f, b in zip(report.frames, best))
    return hits / len(report.frames)


# --------------------------------------------------------------------------
# metric comparison


METRICS = ("safety", "p95", "p99", "avg", "max")
_AGG = {"safety": "mean_score", "p95": "p95_t", "p99": "p99_t", "avg": "mean_t", "max": "max_t"}


@dataclass
class Comparison:
    labels: list
    values: dict
    best: dict
    normalized: dict

    def rows(self):
        for i, label in enumerate(self.labels):
            yield label, [self.values[m][i] for m in METRICS], [self.normalized[m][i] for m in METRICS]


def _normalize(metric, v: np.ndarray) -> np.ndarray:
    if metric == "safety":
        if np.all(v > 0):
            return v / v.max()
        span = v.max() - v.min()
        return (v - v.min()) / span if span > 0 else np.ones_like(v)
    return np.where(v > 0, v.min() / np.where(v > 0, v, 1.0), 1.0)


def compare_metrics(reports: Mapping[str, RunReport]) -> Comparison:
    """Best plan per metric and values normalised so each metric's best is 1.

    Safety (mean score) is maximised; latency metrics are minimised and shown
    as ``best / value``. Mean scores are divided by their maximum when all are
    positive and min-max scaled otherwise. Ties go to the first report.
    """
    if len(reports) < 2:
        raise DataError("need at least two reports to compare")
    labels = list(reports)
    ids = {reports[k].trace_id for k in labels}
    if len(ids) != 1:
        raise DataError("reports were produced from different traces")
    values, best, norm = {}, {}, {}
    for m in METRICS:
        v = np.array([reports[k].aggregates[_AGG[m]] for k in labels], dtype=float)
        idx = int(np.argmax(v)) if m == "safety" else int(np.argmin(v))
        values[m] = v.tolist()
        best[m] = labels[idx]
        norm[m] = _normalize(m, v).tolist()
    return Comparison(labels, values, best, norm)
