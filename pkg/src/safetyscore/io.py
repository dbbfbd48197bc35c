"""JSON / JSONL / CSV readers and writers for configs, traces, models, stores
and reports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .latency import BaselineLatencyRegressor, ConversionTable, LatencyCoefficients, LOG_CONVENTION, RoiSpec
from .planning import ClusterStore
from .response import AccumulationFn, DependencyGraph, ModuleSpec, validate_graph
from .rss import ScoreWeights
from .simulate import METRICS, Comparison, FrameRecord, MachineSpec, ModuleProfile, RunReport, SystemModel, TraceConfig

MODEL_FORMAT = "safetyscore-model/1"
STORE_FORMAT = "safetyscore-store/1"
REPORT_FORMAT = "safetyscore-report/1"


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _stamp(doc: dict, header: bool) -> dict:
    if header:
        doc = dict(doc)
        doc["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return doc


def write_json(path, doc: dict, header: bool = False):
    Path(path).write_text(_dump(_stamp(doc, header)))


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# -- graph ---------------------------------------------------------------


def graph_to_dict(g: DependencyGraph, conversion: ConversionTable | None = None) -> dict:
    conv = {}
    if conversion is not None:
        for (m, r), nu in conversion.ratio.items():
            conv.setdefault(m, {})[str(r)] = nu
    return {
        "modules": [
            {
                "name": m.name,
                "sampling_interval": m.sampling_interval,
                "resources": sorted(m.supported_resources),
                "accumulation": asdict(m.accumulation),
                "deep_learning": m.deep_learning,
                "conversion": conv.get(m.name, {}),
            }
            for m in g.modules
        ],
        "edges": [list(e) for e in g.edges],
    }


def graph_from_dict(d: dict) -> tuple[DependencyGraph, ConversionTable]:
    modules, ratio = [], {}
    for node in d.get("modules", []):
        acc = node.get("accumulation")
        modules.append(ModuleSpec(
            name=node["name"],
            sampling_interval=node.get("sampling_interval"),
            supported_resources=frozenset(node.get("resources", [0])),
            accumulation=AccumulationFn(**acc) if acc else AccumulationFn(0.0, 1.0, 1.0),
            deep_learning=bool(node.get("deep_learning", False)),
        ))
        for r, nu in node.get("conversion", {}).items():
            ratio[(node["name"], int(r))] = float(nu)
    g = DependencyGraph(tuple(modules), tuple(tuple(e) for e in d.get("edges", [])))
    validate_graph(g)
    return g, ConversionTable(ratio)


def load_graph(path) -> tuple[DependencyGraph, ConversionTable]:
    return graph_from_dict(read_json(path))


# -- trace ---------------------------------------------------------------


def write_trace(path, trace):
    with open(path, "w") as fh:
        for f in trace:
            fh.write(json.dumps(f.to_dict(), sort_keys=True, allow_nan=False) + "\n")


def read_trace(path) -> list[FrameRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(FrameRecord.from_dict(json.loads(line)))
    return out


# -- model ---------------------------------------------------------------


def roi_to_dict(roi: RoiSpec) -> dict:
    return {"roi_width": roi.roi_width, "roi_depth": roi.roi_depth,
            "fine_cell": list(roi.fine_cell), "mid_cell": list(roi.mid_cell)}


def roi_from_dict(d) -> RoiSpec:
    return RoiSpec(d["roi_width"], d["roi_depth"], tuple(d["fine_cell"]), tuple(d["mid_cell"]))


def model_to_dict(model: SystemModel, mse: dict | None = None, ridge=None) -> dict:
    reg = model.regressor
    names = model.graph.names
    per_module = {}
    for j, n in enumerate(names):
        per_module[n] = {
            "coefficients": reg.coefficients(j).to_dict(),
            "mse": None if mse is None else mse[n],
            "stats": model.stats.get(n),
        }
    ridges = np.atleast_1d(reg.ridge_).tolist() if ridge is None else ridge
    return {
        "format": MODEL_FORMAT,
        "roi": roi_to_dict(model.roi),
        "log": LOG_CONVENTION,
        "ridge": ridges,
        "graph": graph_to_dict(model.graph, model.conversion),
        "conversion": model.conversion.to_list(),
        "modules": per_module,
        "accumulation": {n: asdict(fn) for n, fn in model.accumulation.items()},
        "critical": list(model.critical),
        "timeout_threshold": model.timeout_threshold,
    }


def regressor_from_coefficients(coefs: list[LatencyCoefficients]) -> BaselineLatencyRegressor:
    reg = BaselineLatencyRegressor()
    reg.coef_ = np.vstack([c.vector() for c in coefs])
    reg.intercept_ = np.array([c.e for c in coefs])
    reg.n_features_in_ = coefs[0].dim
    reg.ridge_ = np.zeros(len(coefs))
    reg.n_clamped_ = 0
    return reg


def model_from_dict(d: dict) -> SystemModel:
    if d.get("log", LOG_CONVENTION) != LOG_CONVENTION:
        raise ValueError(f"unsupported log convention {d.get('log')!r}")
    graph, _ = graph_from_dict(d["graph"])
    names = graph.names
    coefs = [LatencyCoefficients.from_dict(d["modules"][n]["coefficients"]) for n in names]
    reg = regressor_from_coefficients(coefs)
    reg.ridge_ = np.atleast_1d(np.asarray(d.get("ridge", 0.0), dtype=float))
    return SystemModel(
        graph=graph,
        roi=roi_from_dict(d["roi"]),
        regressor=reg,
        conversion=ConversionTable.from_list(d["conversion"]),
        accumulation={n: AccumulationFn(**v) for n, v in d.get("accumulation", {}).items()},
        critical=list(d["critical"]),
        stats={n: d["modules"][n].get("stats") or {} for n in names},
        timeout_threshold=d.get("timeout_threshold", 0.1),
    )


def load_model(path) -> SystemModel:
    return model_from_dict(read_json(path))


# -- store / report ------------------------------------------------------


def store_to_dict(store: ClusterStore) -> dict:
    return {"format": STORE_FORMAT} | store.to_dict()


def load_store(path) -> ClusterStore:
    return ClusterStore.from_dict(read_json(path))


def report_to_dict(report: RunReport) -> dict:
    return {"format": REPORT_FORMAT} | report.to_dict()


def load_report(path) -> RunReport:
    return RunReport.from_dict(read_json(path))


def _csv_text(header: list, rows, stamp: bool) -> str:
    buf = io.StringIO()
    if stamp:
        buf.write(f"# generated_at={time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return v


def report_csv(report: RunReport, header: bool = False) -> str:
    cols = ["frame", "plan", "t", "theta", "score", "timeout"] + [f"lat_{n}" for n in report.modules]
    rows = ([f.frame, f.plan, f.t, f.theta, f.score, int(f.timeout), *f.latencies] for f in report.frames)
    return _csv_text(cols, rows, header)


def comparison_csv(cmp: Comparison, header: bool = False) -> str:
    cols = ["label"] + list(METRICS) + [f"{m}_norm" for m in METRICS]
    rows = ([label, *vals, *norm] for label, vals, norm in cmp.rows())
    text = _csv_text(cols, rows, header)
    best = "".join(f"# best_{m}={cmp.best[m]}\n" for m in METRICS)
    return text + best


def curve_csv(ts, scores, header: bool = False) -> str:
    return _csv_text(["t", "score"], zip(map(float, ts), map(float, scores)), header)


# -- run configuration ---------------------------------------------------


@dataclass
class RunConfig:
    roi: RoiSpec = field(default_factory=RoiSpec)
    weights: ScoreWeights = field(default_factory=lambda: ScoreWeights(d_mu=2.0))
    machine: MachineSpec = field(default_factory=MachineSpec)
    graph: str | None = None
    trace: str | None = None
    model: str | None = None
    store: str | None = None
    seed: int = 0
    frames: int = 2000
    ridge: object = 1e-6
    h: float = 100
    priority_policy: str = "critical-first"
    scale_blocks: bool = False
    switch_penalty: float = 0.0
    quantile: float = 0.7
    fan_out: int = 2
    timeout_threshold: float = 0.1
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")

    def trace_config(self, profiles) -> TraceConfig:
        gen = dict(self.generator)
        prof = dict(profiles)
        for name, p in gen.pop("profiles", {}).items():
            prof[name] = ModuleProfile(**p)
        known = {f.name for f in fields(TraceConfig)}
        unknown = set(gen) - known
        if unknown:
            raise ValueError(f"unknown generator settings: {sorted(unknown)}")
        for key in ("v_range", "obstacle_v_range", "theta_range"):
            if key in gen:
                gen[key] = tuple(gen[key])
        return TraceConfig(frames=self.frames, roi=self.roi, d_mu=self.weights.d_mu, profiles=prof, **gen)


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    kw = {}
    if "roi" in d:
        kw["roi"] = roi_from_dict(d.pop("roi"))
    if "weights" in d:
        kw["weights"] = ScoreWeights(**d.pop("weights"))
    if "machine" in d:
        m = dict(d.pop("machine"))
        if "power" in m:
            m["power"] = {int(k): v for k, v in m["power"].items()}
        kw["machine"] = MachineSpec(**m)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if d.get("h") is None and "h" in d:
        d["h"] = math.inf
    return RunConfig(**kw, **d)


def load_config(path) -> RunConfig:
    return config_from_dict(read_json(path))
