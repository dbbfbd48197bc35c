"""Fit and plan workflows over a whole trace."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .latency import BaselineLatencyRegressor, ConversionTable, RoiSpec
from .planning import ClusterStore, PriorityPolicy, enumerate_plans, offline_plan
from .response import (
    DependencyGraph,
    critical_modules,
    fit_accumulation,
    latency_summary,
    validate_graph,
)
from .rss import ScoreWeights
from .simulate import (
    MachineSpec,
    SystemModel,
    _precompute,
    plan_scores,
    trace_timeout_patterns,
)
from .validation import DataError

logger = logging.getLogger(__name__)


@dataclass
class FitResult:
    model: SystemModel
    mse: dict
    ridge: object


def fit_system(trace, graph: DependencyGraph, conversion: ConversionTable, roi: RoiSpec | None = None,
               ridge=1e-6, quantile: float = 0.7, fan_out: int = 2,
               timeout_threshold: float = 0.1) -> FitResult:
    """Fit per-module baseline latency models, accumulation curves and the
    critical set from a measured trace."""
    if not trace:
        raise DataError("trace is empty")
    validate_graph(graph)
    roi = roi or RoiSpec()
    names = graph.names
    for f in trace:
        missing = [n for n in names if n not in f.latencies]
        if missing:
            raise DataError(f"frame {f.frame} lacks latencies for {missing}")
    lat = np.array([[f.latencies[n] for n in names] for f in trace])
    probe = SystemModel(graph, roi, None, conversion, {}, [], timeout_threshold=timeout_threshold)
    X = probe.density_matrix(trace)
    reg = BaselineLatencyRegressor(ridge=ridge).fit(X, lat)
    pred = reg.predict(X)
    mse = {n: float(np.mean((pred[:, j] - lat[:, j]) ** 2)) for j, n in enumerate(names)}
    stats = {n: latency_summary(lat[:, j]) for j, n in enumerate(names)}

    resp = [f.response_time for f in trace]
    if any(r is None for r in resp):
        accumulation = {}
        logger.info("trace has no response times; keeping graph accumulation curves")
    else:
        accumulation = fit_accumulation({n: lat[:, j] for j, n in enumerate(names)}, resp, graph)
    critical = critical_modules(graph, stats, quantile=quantile, fan_out=fan_out)
    model = SystemModel(graph, roi, reg, conversion, accumulation, critical, stats, timeout_threshold)
    return FitResult(model, mse, reg.ridge_)


def build_store(trace, model: SystemModel, machine: MachineSpec, weights: ScoreWeights,
                priority_policy=PriorityPolicy.CRITICAL_FIRST, plans=None, h: float = 100,
                scale_blocks: bool = False) -> tuple[ClusterStore, list, np.ndarray]:
    """Offline planning over a trace: returns the store, the plan list and
    the per-frame score matrix."""
    if not trace:
        raise DataError("trace is empty")
    plans = plans if plans is not None else enumerate_plans(model.graph, priority_policy, model.critical)
    pre = _precompute(trace, model, weights)
    scores = plan_scores(trace, plans, model, machine, weights, pre=pre)
    K = trace_timeout_patterns(trace, model)
    features = np.hstack([pre[0], K])
    store = offline_plan(list(zip(pre[0], K)), model.graph, plans, features=features, scores=scores,
                         s_dim=pre[0].shape[1], h=h, scale_blocks=scale_blocks)
    return store, plans, scores
