"""``safetyscore`` command line: gen, fit, plan, run, compare.

Settings resolve in order: command-line flag, ``SAFETYSCORE_*`` environment
variable, ``--config`` JSON file, built-in default. Exit status is 0 on
success, 2 on usage or configuration errors and 3 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import io as sio
from .defaults import PROFILES, default_conversion, default_graph
from .pipeline import build_store, fit_system
from .planning import PriorityPolicy, enumerate_plans
from .response import GraphError
from .simulate import Policy, compare_metrics, generate_trace, run_config, run_static, _precompute
from .validation import DataError

ENV_PREFIX = "SAFETYSCORE_"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

logger = logging.getLogger("safetyscore")


class UsageError(Exception):
    """Bad flags, config or missing inputs."""


def _ridge_value(text):
    if text == "gcv":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("ridge must be a non-negative number or 'gcv'") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError("ridge must be non-negative")
    return value


def _h_value(text):
    if str(text).lower() in ("inf", "none"):
        return math.inf
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("h must be a positive integer")
    return value


def _flag_bool(text):
    return str(text).lower() in ("1", "true", "yes", "on")


# flag dest -> (RunConfig field, parser)
_OVERRIDES = {
    "seed": ("seed", int),
    "frames": ("frames", int),
    "ridge": ("ridge", _ridge_value),
    "h": ("h", _h_value),
    "graph": ("graph", str),
    "trace": ("trace", str),
    "model": ("model", str),
    "store": ("store", str),
    "priority": ("priority_policy", str),
    "switch_penalty": ("switch_penalty", float),
}


def _env(name):
    return os.environ.get(ENV_PREFIX + name.upper())


def resolve_config(args) -> sio.RunConfig:
    path = args.config or _env("config")
    try:
        cfg = sio.load_config(path) if path else sio.RunConfig()
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from None
    for dest, (attr, parse) in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            raw = _env(dest)
            if raw is not None:
                try:
                    value = parse(raw)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"bad {ENV_PREFIX}{dest.upper()}={raw!r}: {exc}") from None
        if value is not None:
            setattr(cfg, attr, value)
    try:
        cfg.__post_init__()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _no_header(args) -> bool:
    return bool(args.no_header or _flag_bool(_env("no_header") or ""))


def _existing(path, what):
    if not path:
        raise UsageError(f"no {what} path given")
    if not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")
    return path


def _graph(cfg):
    if cfg.graph:
        try:
            return sio.load_graph(_existing(cfg.graph, "graph"))
        except (GraphError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"invalid graph {cfg.graph}: {exc}") from None
    return default_graph(), default_conversion()


def _trace(cfg):
    path = _existing(cfg.trace, "trace")
    try:
        return sio.read_trace(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed trace {path}: {exc}") from None


def _model(cfg):
    path = _existing(cfg.model, "model")
    try:
        return sio.load_model(path)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed model {path}: {exc}") from None


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- commands -------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = resolve_config(args)
    if cfg.frames < 1:
        raise UsageError("--frames must be at least 1")
    graph, _ = _graph(cfg)
    try:
        tcfg = cfg.trace_config(PROFILES).validate()
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid generator settings: {exc}") from None
    trace = generate_trace(tcfg, cfg.seed, graph)
    sio.write_trace(args.out, trace)
    logger.info("wrote %d frames to %s", len(trace), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = resolve_config(args)
    graph, conversion = _graph(cfg)
    trace = _trace(cfg)
    res = fit_system(trace, graph, conversion, cfg.roi, ridge=cfg.ridge, quantile=cfg.quantile,
                     fan_out=cfg.fan_out, timeout_threshold=cfg.timeout_threshold)
    doc = sio.model_to_dict(res.model, res.mse)
    sio.write_json(args.out, doc, header=not _no_header(args))
    width = max(len(n) for n in graph.names)
    for n in graph.names:
        print(f"{n:<{width}}  mse={res.mse[n]:.6e}")
    print(f"{'mean':<{width}}  mse={sum(res.mse.values()) / len(res.mse):.6e}")
    print(f"critical: {','.join(res.model.critical)}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = resolve_config(args)
    trace = _trace(cfg)
    if not trace:
        raise UsageError(f"trace {cfg.trace} is empty")
    model = _model(cfg)
    store, plans, _ = build_store(trace, model, cfg.machine, cfg.weights, cfg.priority_policy,
                                  h=cfg.h, scale_blocks=args.scale_blocks or cfg.scale_blocks)
    sio.write_json(args.out, sio.store_to_dict(store), header=not _no_header(args))
    print(f"plans searched: {len(plans)}  clusters: {store.k}")
    for p, c in zip(store.plans, store.member_counts):
        print(f"  {p.label()}  members={c}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    policy = args.policy or _env("policy") or "cpu-gpu"
    try:
        policy = Policy(policy)
    except ValueError:
        raise UsageError(f"unknown policy {policy!r}") from None
    store = None
    if policy is Policy.MANAGED:
        if not cfg.store:
            raise UsageError("--policy managed needs --store")
        store = sio.load_store(_existing(cfg.store, "store"))
    trace = _trace(cfg)
    model = _model(cfg) if trace or cfg.model else None
    if args.plan:
        plans = {p.label(): p for p in enumerate_plans(model.graph, cfg.priority_policy, model.critical)}
        if args.plan not in plans:
            raise UsageError(f"no enumerated plan with allocation {args.plan}")
        report = run_static(trace, plans[args.plan], model, cfg.machine, cfg.weights, f"plan-{args.plan}")
    else:
        kw = {}
        if policy is Policy.MANAGED:
            kw = {"h": cfg.h, "switch_penalty": cfg.switch_penalty}
        report = run_config(trace, policy, model, cfg.machine, cfg.weights, store, **kw)
    header = not _no_header(args)
    sio.write_json(args.out, sio.report_to_dict(report), header=header)
    if args.csv:
        Path(args.csv).write_text(sio.report_csv(report, header=header))
    agg = report.aggregates
    print(" ".join(f"{k}={agg[k]:.6g}" if isinstance(agg[k], float) else f"{k}={agg[k]}" for k in sorted(agg)))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = resolve_config(args)
    reports = {}
    for path in args.reports:
        try:
            rep = sio.load_report(_existing(path, "report"))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"malformed report {path}: {exc}") from None
        label = rep.policy if rep.policy not in reports else Path(path).stem
        reports[label] = rep
    if args.all_plans:
        trace, model = _trace(cfg), _model(cfg)
        pre = _precompute(trace, model, cfg.weights)
        for i, p in enumerate(enumerate_plans(model.graph, cfg.priority_policy, model.critical)):
            # plans that differ only in priority share an allocation label
            label = f"plan-{p.label()}" if f"plan-{p.label()}" not in reports else f"plan-{p.label()}-{i}"
            reports[label] = run_static(trace, p, model, cfg.machine, cfg.weights, label, pre=pre)
    if len(reports) < 2:
        raise UsageError("compare needs at least two reports")
    cmp = compare_metrics(reports)
    _emit(sio.comparison_csv(cmp, header=not _no_header(args)), args.out)
    if args.out not in (None, "-"):
        for m, label in cmp.best.items():
            print(f"best {m}: {label}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int)
    common.add_argument("--graph", help="dependency graph JSON (default: built-in LiDAR pipeline)")
    common.add_argument("--no-header", action="store_true", help="omit timestamps for byte-stable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="safetyscore", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic frame trace (JSONL)")
    g.add_argument("--frames", type=int)
    g.add_argument("--out", default="trace.jsonl")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", parents=[common], help="fit latency and accumulation models")
    f.add_argument("--trace")
    f.add_argument("--ridge", type=_ridge_value, help="penalty weight or 'gcv'")
    f.add_argument("--out", default="model.json")
    f.set_defaults(func=cmd_fit)

    pl = sub.add_parser("plan", parents=[common], help="offline plan search and clustering")
    pl.add_argument("--trace")
    pl.add_argument("--model")
    pl.add_argument("--h", type=_h_value, help="continuous-timeout trigger length")
    pl.add_argument("--priority", choices=[x.value for x in PriorityPolicy])
    pl.add_argument("--scale-blocks", action="store_true")
    pl.add_argument("--out", default="store.json")
    pl.set_defaults(func=cmd_plan)

    r = sub.add_parser("run", parents=[common], help="simulate a trace under one policy")
    r.add_argument("--trace")
    r.add_argument("--model")
    r.add_argument("--store")
    r.add_argument("--policy", choices=[x.value for x in Policy])
    r.add_argument("--plan", help="run one enumerated static plan, given by its allocation digits")
    r.add_argument("--priority", choices=[x.value for x in PriorityPolicy])
    r.add_argument("--h", type=_h_value)
    r.add_argument("--switch-penalty", type=float)
    r.add_argument("--out", default="report.json")
    r.add_argument("--csv", help="also write per-frame CSV")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", parents=[common], help="rank reports by safety and latency metrics")
    c.add_argument("reports", nargs="*")
    c.add_argument("--all-plans", action="store_true", help="also run every enumerated static plan")
    c.add_argument("--trace")
    c.add_argument("--model")
    c.add_argument("--priority", choices=[x.value for x in PriorityPolicy])
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
