"""Offline plan search/clustering and online timeout monitoring and matching."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .response import DependencyGraph, validate_graph
from .validation import DataError, check_matrix

# 8-bit saturating counters, as in the comparator/counter hardware.
COUNTER_MAX = 255


class PriorityPolicy(str, Enum):
    TOPO_FIXED = "topo"
    CRITICAL_FIRST = "critical-first"
    ALL = "all"


@dataclass(frozen=True)
class ResourcePlan:
    """Resource index per module (graph order) and a module priority order.

    Earlier entries in ``priority`` run first when several modules are ready.
    """

    allocation: tuple
    priority: tuple

    def __post_init__(self):
        object.__setattr__(self, "allocation", tuple(int(r) for r in self.allocation))
        object.__setattr__(self, "priority", tuple(self.priority))
        if len(set(self.priority)) != len(self.priority):
            raise ValueError("priority must not repeat modules")

    def check(self, g: DependencyGraph):
        if sorted(self.priority) != sorted(g.names):
            raise ValueError("priority is not a permutation of the graph modules")
        if len(self.allocation) != len(g.modules):
            raise ValueError("allocation length does not match the graph")
        for m, r in zip(g.modules, self.allocation):
            if r not in m.supported_resources:
                raise ValueError(f"module {m.name!r} does not support resource {r}")
        return self

    def resource_of(self, g: DependencyGraph) -> dict[str, int]:
        return dict(zip(g.names, self.allocation))

    def to_dict(self) -> dict:
        return {"allocation": list(self.allocation), "priority": list(self.priority)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["allocation"]), tuple(d["priority"]))

    def label(self) -> str:
        return "".join(str(r) for r in self.allocation)


def critical_first_order(g: DependencyGraph, critical: Sequence[str]) -> tuple:
    topo = g.topological_order()
    crit = set(critical)
    return tuple([n for n in topo if n in crit] + [n for n in topo if n not in crit])


def enumerate_plans(
    g: DependencyGraph,
    priority_policy: PriorityPolicy | str = PriorityPolicy.CRITICAL_FIRST,
    critical: Sequence[str] = (),
) -> list[ResourcePlan]:
    """Cartesian product of allowed resources and the selected priority orders.

    Plans are ordered allocation-major (lexicographic resource indices in
    graph order), then by priority order.
    """
    validate_graph(g)
    policy = PriorityPolicy(priority_policy)
    if policy is PriorityPolicy.TOPO_FIXED:
        orders = [tuple(g.topological_order())]
    elif policy is PriorityPolicy.CRITICAL_FIRST:
        orders = [critical_first_order(g, critical)]
    else:
        orders = list(itertools.permutations(g.topological_order()))
    choices = [sorted(m.supported_resources) for m in g.modules]
    plans, seen = [], set()
    for alloc in itertools.product(*choices):
        for order in orders:
            p = ResourcePlan(alloc, order)
            if p not in seen:
                seen.add(p)
                plans.append(p)
    if not plans:
        raise ValueError("empty plan space")
    return plans


def timeout_pattern(run_lengths: Sequence[float], width: int | None = None) -> np.ndarray:
    """Continuous-timeout counts per critical module, zero-padded to ``width``."""
    k = np.minimum(np.asarray(run_lengths, dtype=float), COUNTER_MAX)
    if np.any(k < 0):
        raise ValueError("timeout counts must be non-negative")
    width = len(k) if width is None else width
    if len(k) > width:
        raise ValueError("timeout pattern longer than configured width")
    return np.concatenate([k, np.zeros(width - len(k))])


def current_feature(s_current, k_current, scaling: "BlockScaling | None" = None) -> np.ndarray:
    """Concatenate density vector and timeout pattern, optionally rescaled."""
    s = np.asarray(s_current, dtype=float).ravel()
    k = np.asarray(k_current, dtype=float).ravel()
    if scaling is not None:
        if (len(s), len(k)) != (scaling.s_dim, scaling.k_dim):
            raise DataError("feature block dimensions do not match the store")
        return scaling.apply(np.concatenate([s, k]))
    return np.concatenate([s, k])


@dataclass(frozen=True)
class BlockScaling:
    """Per-block min-max scaling of S and K."""

    s_dim: int
    k_dim: int
    s_range: tuple = (0.0, 1.0)
    k_range: tuple = (0.0, 1.0)

    @classmethod
    def fit(cls, F, s_dim):
        F = np.asarray(F, dtype=float)
        S, K = F[:, :s_dim], F[:, s_dim:]
        rng = lambda B: (float(B.min()), float(B.max())) if B.size else (0.0, 1.0)
        return cls(s_dim, F.shape[1] - s_dim, rng(S), rng(K))

    def apply(self, F):
        F = np.array(F, dtype=float, copy=True)
        for sl, (lo, hi) in ((np.s_[..., :self.s_dim], self.s_range), (np.s_[..., self.s_dim:], self.k_range)):
            span = hi - lo if hi > lo else 1.0
            F[sl] = (F[sl] - lo) / span
        return F


@dataclass
class ClusterStore:
    """Offline planning output: one cluster per winning plan."""

    features: np.ndarray
    plans: list
    member_counts: list
    s_dim: int
    k_dim: int
    h: float = 100
    scaling: BlockScaling | None = None
    default_plan: ResourcePlan | None = None

    @property
    def k(self) -> int:
        return len(self.plans)

    def to_dict(self) -> dict:
        return {
            "header": {
                "s_dim": self.s_dim,
                "k_dim": self.k_dim,
                "h": None if np.isinf(self.h) else self.h,
                "scaling": None if self.scaling is None else {
                    "s_range": list(self.scaling.s_range), "k_range": list(self.scaling.k_range)},
                "default_plan": None if self.default_plan is None else self.default_plan.to_dict(),
            },
            "clusters": [
                {"plan": p.to_dict(), "members": int(c), "feature": f.tolist()}
                for p, c, f in zip(self.plans, self.member_counts, self.features)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        hdr = d["header"]
        sc = hdr.get("scaling")
        scaling = None if sc is None else BlockScaling(hdr["s_dim"], hdr["k_dim"], tuple(sc["s_range"]), tuple(sc["k_range"]))
        clusters = d["clusters"]
        dim = hdr["s_dim"] + hdr["k_dim"]
        return cls(
            features=np.array([c["feature"] for c in clusters], dtype=float).reshape(len(clusters), dim),
            plans=[ResourcePlan.from_dict(c["plan"]) for c in clusters],
            member_counts=[c["members"] for c in clusters],
            s_dim=hdr["s_dim"],
            k_dim=hdr["k_dim"],
            h=float("inf") if hdr.get("h") is None else hdr["h"],
            scaling=scaling,
            default_plan=None if hdr.get("default_plan") is None else ResourcePlan.from_dict(hdr["default_plan"]),
        )


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; exact ties resolve to the lowest column."""
    return np.argmax(np.asarray(scores, dtype=float), axis=1)


class PlanClusterer(ClusterMixin, BaseEstimator):
    """Group samples by their best plan and average their features.

    ``fit(F, scores)`` takes the ``(n, dim)`` feature matrix ``S ⊕ K`` and the
    ``(n, n_plans)`` score matrix; each sample joins the cluster of its
    highest-scoring plan. ``predict`` returns the Euclidean-nearest cluster.

    Parameters
    ----------
    s_dim : int or None
        Width of the density block; needed for block scaling.
    scale_blocks : bool, default False
        Min-max scale the S and K blocks before averaging and matching.
    """

    def __init__(self, s_dim=None, scale_blocks=False):
        self.s_dim = s_dim
        self.scale_blocks = scale_blocks

    def fit(self, X, y):
        F = check_matrix(X, "features")
        scores = np.asarray(y, dtype=float)
        if scores.ndim != 2 or scores.shape[0] != F.shape[0] or scores.shape[1] == 0:
            raise DataError("scores must be an (n_samples, n_plans) matrix")
        s_dim = F.shape[1] if self.s_dim is None else self.s_dim
        self.scaling_ = BlockScaling.fit(F, s_dim) if self.scale_blocks else None
        if self.scaling_ is not None:
            F = self.scaling_.apply(F)
        self.winners_ = argmax_lowest(scores)
        self.plan_indices_ = np.unique(self.winners_)
        self.labels_ = np.searchsorted(self.plan_indices_, self.winners_)
        sums = np.zeros((len(self.plan_indices_), F.shape[1]))
        np.add.at(sums, self.labels_, F)
        self.counts_ = np.bincount(self.labels_, minlength=len(self.plan_indices_))
        self.cluster_centers_ = sums / self.counts_[:, None]
        self.mean_scores_ = scores.mean(axis=0)
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        F = check_matrix(X, "features", n_features=self.cluster_centers_.shape[1])
        if self.scaling_ is not None:
            F = self.scaling_.apply(F)
        d2 = ((F[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def score_matrix(samples: Sequence, plans: Sequence[ResourcePlan], score_fn: Callable, g) -> np.ndarray:
    return np.array([[score_fn(g, p, s) for p in plans] for s in samples], dtype=float)


def offline_plan(
    samples: Sequence,
    g: DependencyGraph,
    plans: Sequence[ResourcePlan],
    score_fn: Callable | None = None,
    *,
    features=None,
    scores=None,
    s_dim: int | None = None,
    h: float = 100,
    scale_blocks: bool = False,
) -> ClusterStore:
    """Exhaustive per-sample plan search followed by clustering.

    Each sample is ``(S_i, K_i)`` plus anything ``score_fn(g, plan, sample)``
    needs. A precomputed ``scores`` matrix may replace ``score_fn``.
    """
    if len(plans) == 0:
        raise ValueError("no plans to search")
    if len(samples) == 0:
        raise DataError("no samples")
    if features is None:
        features = np.vstack([current_feature(s[0], s[1]) for s in samples])
        s_dim = len(np.ravel(samples[0][0]))
    if scores is None:
        scores = score_matrix(samples, plans, score_fn, g)
    model = PlanClusterer(s_dim=s_dim, scale_blocks=scale_blocks).fit(features, scores)
    k_dim = np.shape(features)[1] - (s_dim if s_dim is not None else np.shape(features)[1])
    best_static = int(np.argmax(model.mean_scores_))
    return ClusterStore(
        features=model.cluster_centers_,
        plans=[plans[i] for i in model.plan_indices_],
        member_counts=model.counts_.tolist(),
        s_dim=np.shape(features)[1] - k_dim,
        k_dim=k_dim,
        h=h,
        scaling=model.scaling_,
        default_plan=plans[best_static],
    )


def match_cluster(store: ClusterStore, f) -> tuple[int, ResourcePlan]:
    """Nearest cluster by Euclidean distance; exact ties go to the lowest index."""
    if store.k == 0:
        raise DataError("cluster store is empty")
    f = np.asarray(f, dtype=float)
    if f.shape != (store.features.shape[1],):
        raise DataError(f"feature has shape {f.shape}, store expects ({store.features.shape[1]},)")
    d2 = ((store.features - f) ** 2).sum(axis=1)
    idx = int(np.argmin(d2))
    return idx, store.plans[idx]


@dataclass(frozen=True)
class TimeoutMonitor:
    """Continuous-timeout counter that fires once when a run reaches ``h``."""

    h: float = 100
    counter: int = 0

    @property
    def armed(self) -> bool:
        return self.counter < self.h


def monitor_step(m: TimeoutMonitor, frame_timeout: bool) -> tuple[TimeoutMonitor, bool]:
    if not frame_timeout:
        return replace(m, counter=0), False
    nxt = replace(m, counter=m.counter + 1)
    return nxt, nxt.counter == m.h
