"""Roofline bounds, normalized-access metrics, and area efficiency.

The performance bound of a workload is the lesser of what the PEs can
sustain and what DRAM can feed, counting each input and output byte once
(infinite on-chip buffer assumption).  Normalized access expresses memory
traffic per thousand MACs so layers of different sizes compare directly.
Area efficiency divides mean suite performance by a dimensionless area
factor times the PE-count multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .machine import SimResult
from .workloads import Workload

__all__ = [
    "AreaModel",
    "AREA_MODELS",
    "roofline_ops",
    "operational_intensity",
    "normalized_access",
    "area_efficiency",
    "achieved_ops",
    "report",
]


@dataclass(frozen=True)
class AreaModel:
    """Relative silicon cost of one architecture, by component.

    The factors are configuration constants from a synthesis-based
    estimate; the total is what normalizes performance per area.
    """

    name: str
    mac: float
    global_buffer: float
    local_buffer: float
    controllers: float
    bfn_fifo: float

    @property
    def area_factor(self) -> float:
        return self.mac + self.global_buffer + self.local_buffer + self.controllers + self.bfn_fifo


AREA_MODELS = {
    "row-stationary": AreaModel("row-stationary", 0.08, 0.19, 0.48, 0.25, 0.00),
    "systolic": AreaModel("systolic", 0.08, 0.38, 0.00, 0.00, 0.00),
    "vectormesh": AreaModel("vectormesh", 0.08, 0.00, 0.67, 0.25, 0.04),
}


def operational_intensity(w: Workload) -> float:
    """MACs per unique byte moved (inputs once, outputs once)."""
    return w.macs / w.unique_bytes()


def roofline_ops(w: Workload, n_pes: int, clock_hz: float, dram_bytes_per_sec: float) -> float:
    """Upper performance bound in ops/s (1 MAC = 2 ops).

    The compute leg is the PE issue rate over the workload's MACs; the
    memory leg is DRAM bandwidth over the unique input+output bytes.
    """
    if w.macs <= 0:
        raise ValueError("workload has no work")
    compute_s = w.macs / (n_pes * clock_hz)
    memory_s = w.unique_bytes() / dram_bytes_per_sec
    return 2.0 * w.macs / max(compute_s, memory_s)


def achieved_ops(r: SimResult, clock_hz: float) -> float:
    if r.cycles == 0:
        return 0.0
    return 2.0 * r.macs * clock_hz / r.cycles


def normalized_access(r: SimResult, level: str) -> float:
    """Bytes touched at a memory level per 1000 MACs."""
    if r.macs <= 0:
        raise ValueError("no MACs recorded; normalized access undefined")
    if level == "glb":
        total = r.glb_read_bytes + r.glb_write_bytes
    elif level == "dram":
        total = r.dram_read_bytes + r.dram_write_bytes
    else:
        raise ValueError(f"unknown memory level {level!r}")
    return 1000.0 * total / r.macs


def area_efficiency(mean_gops: float, area_factor: float, multiplier: int) -> float:
    if area_factor * multiplier <= 0:
        raise ValueError("area factor and multiplier must be positive")
    return mean_gops / (area_factor * multiplier)


def _gmean(vals) -> float:
    vals = [v for v in vals if v > 0]
    if not vals:
        return 0.0
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def report(rows: list[dict]) -> dict:
    """Aggregate per-run rows into a comparison table.

    Each row needs: arch, workload, gops, roofline_gops, glb_norm,
    dram_norm, n_pes.  Returns per-arch aggregates (arithmetic and
    geometric means) plus the input rows; callers lay out the text.
    """
    by_arch: dict[str, list[dict]] = {}
    for row in rows:
        by_arch.setdefault(row["arch"], []).append(row)
    aggregates = {}
    for arch, rs in sorted(by_arch.items()):
        aggregates[arch] = {
            "n": len(rs),
            "mean_gops": sum(r["gops"] for r in rs) / len(rs),
            "gmean_gops": _gmean([r["gops"] for r in rs]),
            "gmean_glb_norm": _gmean([r["glb_norm"] for r in rs]),
            "gmean_dram_norm": _gmean([r["dram_norm"] for r in rs]),
        }
    return {"rows": rows, "aggregates": aggregates}


def roofline_series(entries: list[tuple[str, float, float]]) -> list[tuple[str, float, float]]:
    """(label, x=operational intensity MAC/B, y=GOPS) coordinate triples,
    ready for a plotting tool."""
    return sorted(entries, key=lambda e: e[1])
