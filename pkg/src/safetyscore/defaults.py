"""Default LiDAR-perception-like dependency graph and generator profiles."""

from __future__ import annotations

from .latency import ConversionTable
from .response import AccumulationFn, DependencyGraph, ModuleSpec
from .simulate import ModuleProfile

CPU, GPU = 0, 1

# name, sampling interval, resources, accumulation, deep learning, GPU ratio
_MODULES = [
    ("Preprocess", 0.1, {CPU}, AccumulationFn(0.1, 1.0, 3.0), False, None),
    ("GroundFilter", None, {CPU, GPU}, AccumulationFn(0.1, 1.0, 1.0), False, 0.45),
    ("Labeling", None, {CPU, GPU}, AccumulationFn(0.1, 1.0, 1.0), False, 0.5),
    ("Segmentation", None, {CPU, GPU}, AccumulationFn(0.1, 1.0, 2.5), False, 0.3),
    ("Merge", None, {CPU}, AccumulationFn(0.1, 1.0, 1.0), False, None),
    ("OccupancyGrid", None, {CPU, GPU}, AccumulationFn(0.1, 1.0, 1.0), False, 0.55),
    ("Classification", None, {CPU, GPU}, AccumulationFn(0.1, 1.0, 1.5), True, 0.2),
    ("Filter", None, {CPU}, AccumulationFn(0.1, 1.0, 1.0), False, None),
    ("Tracking", None, {CPU}, AccumulationFn(0.1, 1.0, 1.0), False, None),
    ("Fusion", None, {CPU}, AccumulationFn(0.1, 1.0, 1.0), False, None),
]

_EDGES = [
    ("Preprocess", "GroundFilter"),
    ("Preprocess", "Labeling"),
    ("GroundFilter", "Segmentation"),
    ("Labeling", "Segmentation"),
    ("Segmentation", "Merge"),
    ("Segmentation", "OccupancyGrid"),
    ("Segmentation", "Classification"),
    ("Merge", "Filter"),
    ("Filter", "Tracking"),
    ("Classification", "Tracking"),
    ("OccupancyGrid", "Fusion"),
    ("Tracking", "Fusion"),
]

PROFILES = {
    "Preprocess": ModuleProfile(base=0.008, per_obstacle=0.00012),
    "GroundFilter": ModuleProfile(base=0.02, per_obstacle=0.0007, near_weight=1.0),
    "Labeling": ModuleProfile(base=0.005, per_obstacle=0.0001, total_quad=2e-5),
    "Segmentation": ModuleProfile(base=0.02, per_obstacle=0.0006, quad=0.00005, total_quad=2e-6),
    "Merge": ModuleProfile(base=0.004, per_obstacle=0.0001),
    "OccupancyGrid": ModuleProfile(base=0.005, per_obstacle=0.0001, total_quad=1e-6),
    "Classification": ModuleProfile(base=0.018, per_obstacle=0.0004),
    "Filter": ModuleProfile(base=0.004, per_obstacle=0.00008),
    "Tracking": ModuleProfile(base=0.005, per_obstacle=0.0001),
    "Fusion": ModuleProfile(base=0.003, per_obstacle=0.00003),
}


def default_graph() -> DependencyGraph:
    modules = tuple(
        ModuleSpec(name, si, frozenset(res), acc, dl) for name, si, res, acc, dl, _ in _MODULES
    )
    return DependencyGraph(modules, tuple(_EDGES))


def default_conversion() -> ConversionTable:
    return ConversionTable({(name, GPU): nu for name, _, _, _, _, nu in _MODULES if nu is not None})
