"""Software-module dependency graph and instantaneous system response time."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import networkx as nx
import numpy as np
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .validation import DataError, check_matrix, check_vector


class GraphError(ValueError):
    """Malformed dependency graph (cycle, dangling edge, duplicate name)."""

    def __init__(self, message: str, cycle: Sequence[str] | None = None):
        self.cycle = list(cycle) if cycle else None
        super().__init__(message)


@dataclass(frozen=True)
class AccumulationFn:
    """Two-segment piecewise-linear latency accumulation ``w_i``.

    Slope ``slope_below`` up to ``threshold``, ``slope_above`` past it.
    """

    threshold: float = 0.1
    slope_below: float = 1.0
    slope_above: float = 1.0

    def __post_init__(self):
        if not self.threshold >= 0:
            raise ValueError("threshold must be non-negative")
        if not 0 < self.slope_below <= self.slope_above:
            raise ValueError("require 0 < slope_below <= slope_above")

    def __call__(self, t_i):
        return accumulate(self, t_i)


IDENTITY = AccumulationFn(0.0, 1.0, 1.0)


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    sampling_interval: float | None = None
    supported_resources: frozenset = frozenset({0})
    accumulation: AccumulationFn = IDENTITY
    deep_learning: bool = False

    def __post_init__(self):
        if self.sampling_interval is not None and not self.sampling_interval > 0:
            raise ValueError(f"{self.name}: sampling_interval must be positive")
        if not self.supported_resources:
            raise ValueError(f"{self.name}: supported_resources is empty")
        object.__setattr__(self, "supported_resources", frozenset(int(r) for r in self.supported_resources))


@dataclass(frozen=True)
class DependencyGraph:
    modules: tuple = ()
    edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "modules", tuple(self.modules))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.modules]

    def module(self, name: str) -> ModuleSpec:
        for m in self.modules:
            if m.name == name:
                return m
        raise KeyError(name)

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {m.name: [] for m in self.modules}
        for src, dst in self.edges:
            preds[dst].append(src)
        return preds

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.names)
        g.add_edges_from(self.edges)
        return g

    def topological_order(self) -> list[str]:
        """Topological order, ties broken by module name."""
        return list(nx.lexicographical_topological_sort(self.to_networkx()))

    def descendants(self, name: str) -> set[str]:
        return nx.descendants(self.to_networkx(), name)


def validate_graph(g: DependencyGraph) -> list[str]:
    """Check the graph is a well-formed DAG; return its topological order."""
    names = g.names
    seen = set()
    for n in names:
        if n in seen:
            raise GraphError(f"duplicate module name {n!r}")
        seen.add(n)
    for src, dst in g.edges:
        for end in (src, dst):
            if end not in seen:
                raise GraphError(f"edge ({src!r}, {dst!r}) references unknown module {end!r}")
    try:
        cycle = nx.find_cycle(g.to_networkx())
    except nx.NetworkXNoCycle:
        return g.topological_order()
    nodes = [u for u, _ in cycle]
    raise GraphError(f"cycle detected: {' -> '.join(nodes + nodes[:1])}", cycle=nodes)


def _max_latency(summary) -> float:
    if isinstance(summary, Mapping):
        return float(summary["max"])
    return float(summary)


def critical_modules(
    g: DependencyGraph,
    stats: Mapping[str, object],
    quantile: float = 0.7,
    fan_out: int = 2,
) -> list[str]:
    """Safety-critical modules in topological order.

    A module is critical when its maximum latency reaches the ``quantile``
    cutoff over all modules, or when at least ``fan_out`` modules depend on
    it transitively. ``stats`` maps module name to either a max latency or a
    summary mapping with a ``"max"`` key.
    """
    missing = [n for n in g.names if n not in stats]
    if missing:
        raise DataError(f"missing latency stats for modules: {missing}")
    if not g.modules:
        return []
    maxima = {n: _max_latency(stats[n]) for n in g.names}
    cutoff = float(np.quantile(sorted(maxima.values()), quantile))
    picked = {
        n for n in g.names
        if maxima[n] >= cutoff or len(g.descendants(n)) >= fan_out
    }
    return [n for n in g.topological_order() if n in picked]


def latency_summary(samples) -> dict[str, float]:
    x = np.asarray(samples, dtype=float)
    return {
        "mean": float(x.mean()),
        "max": float(x.max()),
        "p95": float(np.percentile(x, 95)),
        "p99": float(np.percentile(x, 99)),
    }


def accumulate(w: AccumulationFn, t_i):
    """Evaluate the accumulation function; works on scalars and arrays."""
    t = np.asarray(t_i, dtype=float)
    below = np.minimum(t, w.threshold)
    above = np.maximum(t - w.threshold, 0.0)
    out = w.slope_below * below + w.slope_above * above
    return float(out) if out.ndim == 0 else out


def instantaneous_response_time(
    latencies: Mapping[str, float],
    critical: Sequence[str],
    g: DependencyGraph,
    accumulation: Mapping[str, AccumulationFn] | None = None,
) -> float:
    """Sum of accumulation-weighted latencies over the critical modules.

    ``accumulation`` overrides the functions stored on the graph, e.g. with
    fitted ones.
    """
    if not critical:
        raise DataError("critical set is empty")
    total = 0.0
    for name in critical:
        if name not in latencies:
            raise DataError(f"missing latency for critical module {name!r}")
        fn = accumulation[name] if accumulation and name in accumulation else g.module(name).accumulation
        total += accumulate(fn, latencies[name])
    return total


def _hinge_design(X: np.ndarray, knees: Sequence[float], use_above: Sequence[bool]) -> np.ndarray:
    cols = []
    for j, k in enumerate(knees):
        cols.append(np.minimum(X[:, j], k))
        if use_above[j]:
            cols.append(np.maximum(X[:, j] - k, 0.0))
    return np.column_stack(cols)


class AccumulationRegressor(RegressorMixin, BaseEstimator):
    """Joint two-segment least-squares fit of per-module accumulation curves.

    Models ``y = intercept + sum_j w_j(X[:, j])`` where each ``w_j`` is a
    hinge at ``knees[j]``. A ``None`` knee is chosen by a grid search over
    the column's quantiles followed by bounded scalar refinement, minimising
    the residual sum of squares. The intercept soaks up contributions of
    modules that are not in ``X``.

    Parameters
    ----------
    knees : sequence of float or None, optional
        One entry per column of ``X``. ``None`` everywhere when omitted.
    fit_intercept : bool, default True
    n_grid : int, default 40
        Grid size for knee search.
    """

    def __init__(self, knees=None, fit_intercept=True, n_grid=40):
        self.knees = knees
        self.fit_intercept = fit_intercept
        self.n_grid = n_grid

    def _solve(self, X, y, knees):
        use_above = [bool(np.any(X[:, j] > k)) for j, k in enumerate(knees)]
        A = _hinge_design(X, knees, use_above)
        if self.fit_intercept:
            A = np.column_stack([A, np.ones(len(X))])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((A @ coef - y) ** 2))
        return coef, use_above, sse

    def fit(self, X, y):
        X = check_matrix(X, "X")
        y = check_vector(y, "y", length=X.shape[0])
        n, p = X.shape
        if n < 4:
            raise DataError("need at least 4 points to fit accumulation curves")
        if np.any(np.ptp(X, axis=0) == 0):
            raise DataError("degenerate latency column (no spread)")
        given = list(self.knees) if self.knees is not None else [None] * p
        if len(given) != p:
            raise ValueError("knees must have one entry per column")
        knees = [float(k) if k is not None else float(np.median(X[:, j])) for j, k in enumerate(given)]
        free = [j for j, k in enumerate(given) if k is None]
        for _ in range(2 if free else 0):
            for j in free:
                knees[j] = self._search_knee(X, y, knees, j)
        coef, use_above, sse = self._solve(X, y, knees)
        self.knees_ = knees
        self.intercept_ = float(coef[-1]) if self.fit_intercept else 0.0
        below, above = [], []
        pos = 0
        for j in range(p):
            sb = float(coef[pos])
            pos += 1
            if use_above[j]:
                sa = float(coef[pos])
                pos += 1
            else:
                sa = sb
            below.append(sb)
            above.append(sa)
        self.slope_below_ = np.array(below)
        self.slope_above_ = np.array(above)
        self.sse_ = sse
        return self

    def _search_knee(self, X, y, knees, j):
        col = X[:, j]
        lo, hi = np.quantile(col, [0.05, 0.95])
        grid = np.linspace(lo, hi, self.n_grid)

        def sse_at(k):
            trial = list(knees)
            trial[j] = float(k)
            return self._solve(X, y, trial)[2]

        errs = [sse_at(k) for k in grid]
        i = int(np.argmin(errs))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        if b > a:
            res = minimize_scalar(sse_at, bounds=(a, b), method="bounded", options={"xatol": 1e-9})
            if res.fun <= errs[i]:
                return float(res.x)
        return float(grid[i])

    def predict(self, X):
        check_is_fitted(self, "knees_")
        X = check_matrix(X, "X")
        out = np.full(X.shape[0], self.intercept_)
        for j, k in enumerate(self.knees_):
            out += self.slope_below_[j] * np.minimum(X[:, j], k)
            out += self.slope_above_[j] * np.maximum(X[:, j] - k, 0.0)
        return out

    def functions(self) -> list[AccumulationFn]:
        """Fitted curves as :class:`AccumulationFn`, forced convex and positive.

        A non-positive lower slope raises :class:`DataError`; an upper slope
        below the lower one is raised to meet it.
        """
        check_is_fitted(self, "knees_")
        fns = []
        for k, sb, sa in zip(self.knees_, self.slope_below_, self.slope_above_):
            if sb <= 0:
                raise DataError("fitted accumulation slope is not positive")
            fns.append(AccumulationFn(max(float(k), 0.0), float(sb), float(max(sa, sb))))
        return fns


def fit_accumulation(
    latencies: Mapping[str, Sequence[float]],
    response_time: Sequence[float],
    g: DependencyGraph,
    modules: Sequence[str] | None = None,
) -> dict[str, AccumulationFn]:
    """Fit one accumulation function per module from frame records.

    ``latencies[name][k]`` is module latency in frame ``k`` and
    ``response_time[k]`` the observed system response time. Knees sit at the
    module's sampling interval when it has one.
    """
    names = list(modules) if modules is not None else g.names
    X = np.column_stack([np.asarray(latencies[n], dtype=float) for n in names])
    knees = [g.module(n).sampling_interval for n in names]
    reg = AccumulationRegressor(knees=knees).fit(X, response_time)
    return dict(zip(names, reg.functions()))
