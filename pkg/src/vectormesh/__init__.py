"""Cycle-level simulator and scheduling toolkit for a mesh-of-TEU dense
tensor accelerator, with systolic and row-stationary baselines."""

from . import analysis, baselines, butterfly, catalog, machine, mapping, tiling, workloads

__all__ = [
    "analysis",
    "baselines",
    "butterfly",
    "catalog",
    "machine",
    "mapping",
    "tiling",
    "workloads",
]
