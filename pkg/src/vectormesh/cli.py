"""Command-line front end.

Subcommands: list-workloads, schedule, simulate, sweep, report.
Exit codes: 0 success, 2 configuration error, 3 unsupported workload,
4 internal assertion (a scheduler or model bug, never a user error).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, catalog
from .baselines import UnsupportedWorkloadError, make_baseline, run_baseline
from .butterfly import RoutingError
from .machine import ArchConfig, ConfigError, plan_tiles, run
from .mapping import AssignmentError, LoweringError, sharing_axes
from .manifest import SpecError, load_config, manifest_hash, write_manifest, write_stats, write_trace
from .tiling import InfeasibleTileError, make_scheme
from .workloads import GeometryError, Workload, make_conv, make_correlation, make_depthwise, make_gemm, random_inputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSUPPORTED = 3
EXIT_INTERNAL = 4

ARCHES = ("vectormesh", "systolic", "row-stationary")
MESH_FOR_PES = {128: (2, 2), 512: (4, 4)}


@dataclass
class RunSpec:
    """Everything that pins down one run; resolves to a manifest."""

    arch: str = "vectormesh"
    workload: str = "AL CONV3"
    spatial: int | None = None
    pes: int = 128
    seed: int = 0
    machine: dict | None = None
    tile: list | None = None
    assignment: dict | None = None
    sharing: bool = True

    def manifest(self) -> dict:
        return {
            "schema": 1,
            "arch": self.arch,
            "workload": self.workload,
            "spatial": self.spatial,
            "pes": self.pes,
            "seed": self.seed,
            "machine": self.machine or {},
            "tile": self.tile,
            "assignment": self.assignment,
            "sharing": self.sharing,
        }


def resolve_workload(selector: str, spatial: int | None) -> Workload:
    """Catalog name, or inline gemm:M,N,K / conv:ci,co,iw,ih,kw,kh[,s[,d]]
    / dwconv:c,iw,ih,kw,kh[,s[,d]] / corr:ci,ow,oh,sw,sh."""
    if ":" in selector:
        kind, _, rest = selector.partition(":")
        try:
            args = [int(x) for x in rest.split(",") if x]
        except ValueError as e:
            raise SpecError(f"bad inline workload {selector!r}: {e}") from e
        try:
            if kind == "gemm":
                return make_gemm(*args)
            if kind == "conv":
                return make_conv(*args)
            if kind == "dwconv":
                return make_depthwise(*args)
            if kind == "corr":
                return make_correlation(*args)
        except (TypeError, GeometryError) as e:
            raise SpecError(f"bad inline workload {selector!r}: {e}") from e
        raise SpecError(f"unknown inline workload kind {kind!r}")
    try:
        return catalog.build(selector, spatial)
    except KeyError as e:
        raise SpecError(str(e)) from e


def spec_from_args(args) -> RunSpec:
    spec = RunSpec()
    if getattr(args, "config", None):
        data = load_config(args.config)
        for k, v in data.items():
            if k == "schema":
                continue
            setattr(spec, k.replace("-", "_"), v)
    for field in ("arch", "workload", "spatial", "pes", "seed"):
        v = getattr(args, field, None)
        if v is not None:
            setattr(spec, field, v)
    if spec.arch not in ARCHES:
        raise SpecError(f"unknown arch {spec.arch!r}; choose from {ARCHES}")
    if spec.pes not in MESH_FOR_PES:
        raise SpecError(f"pes must be one of {sorted(MESH_FOR_PES)}")
    return spec


def machine_config(spec: RunSpec) -> ArchConfig:
    rows, cols = MESH_FOR_PES[spec.pes]
    overrides = dict(spec.machine or {})
    overrides.setdefault("mesh_rows", rows)
    overrides.setdefault("mesh_cols", cols)
    try:
        return ArchConfig(**overrides)
    except TypeError as e:
        raise SpecError(f"bad machine override: {e}") from e


def execute_spec(spec: RunSpec, out_dir: Path | None, trace: bool = False):
    """Run one cell and optionally write manifest/stats/trace files."""
    w = resolve_workload(spec.workload, spec.spatial)
    inputs = random_inputs(w, spec.seed)
    manifest = spec.manifest()
    mhash = manifest_hash(manifest)

    if spec.arch == "vectormesh":
        cfg = machine_config(spec)
        ts = prog = None
        if spec.tile:
            ts = make_scheme(w, tuple(spec.tile))
        else:
            ts, prog = plan_tiles(w, cfg)
        assignment = None
        if spec.assignment:
            assignment = {k: int(v) for k, v in spec.assignment.items()}
        sp = sharing_axes(w, ts, (cfg.mesh_rows, cfg.mesh_cols), assignment,
                          sharing_enabled=spec.sharing)
        trace_rows = [] if trace else None
        from .machine import Machine

        res = Machine(cfg).run(w, ts, sp, inputs, prog=prog, trace=trace_rows)
        n_pes = cfg.n_pes
        clock = cfg.clock_hz
        dram_bps = cfg.dram_bytes_per_sec
    else:
        bcfg = make_baseline(spec.arch, spec.pes)
        res = run_baseline(bcfg, w, inputs)
        trace_rows = None
        n_pes = bcfg.n_pes
        clock = bcfg.clock_hz
        dram_bps = bcfg.dram_bytes_per_sec

    gops = analysis.achieved_ops(res, clock) / 1e9
    roof = analysis.roofline_ops(w, n_pes, clock, dram_bps) / 1e9
    rows = [
        ("manifest_hash", mhash),
        ("schema", "1"),
        ("arch", spec.arch),
        ("workload", spec.workload),
        ("spatial", str(w.meta.get("spatial", spec.spatial or ""))),
        ("pes", str(spec.pes)),
        ("seed", str(spec.seed)),
        ("gops", f"{gops:.6f}"),
        ("roofline_gops", f"{roof:.6f}"),
        ("frac_roofline", f"{gops / roof:.6f}" if roof else "0"),
        ("glb_norm_bytes_per_kmac", f"{analysis.normalized_access(res, 'glb'):.6f}"),
        ("dram_norm_bytes_per_kmac", f"{analysis.normalized_access(res, 'dram'):.6f}"),
        ("oi_macs_per_byte", f"{analysis.operational_intensity(w):.6f}"),
        ("output_sha256", hashlib.sha256(np.ascontiguousarray(res.output)).hexdigest()),
    ] + res.stats_rows()

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(out_dir / "manifest.json", manifest)
        write_stats(out_dir / "stats.tsv", rows)
        if trace_rows is not None:
            write_trace(out_dir / "trace.tsv", trace_rows)
    return res, rows


def cmd_list_workloads(args) -> int:
    entries = catalog.catalog()
    flt = args.filter or ""
    cols = ("name", "kind", "stride", "dilation", "kernel", "channels", "spatial", "tag")
    print("\t".join(cols))
    for e in entries:
        if flt and flt not in e.name:
            continue
        print("\t".join([
            e.name, e.kind, str(e.stride), str(e.dilation),
            f"{e.k_w}x{e.k_h}" if e.kind != "correlation" else f"search {e.search}x{e.search}",
            f"{e.c_i},{e.c_o}",
            str(e.spatial), e.tag,
        ]))
    return EXIT_OK


def cmd_schedule(args) -> int:
    spec = spec_from_args(args)
    w = resolve_workload(spec.workload, spec.spatial)
    cfg = machine_config(spec)
    if spec.tile or args.tile:
        extents = tuple(int(x) for x in (args.tile or ",".join(map(str, spec.tile))).split(","))
        ts = make_scheme(w, extents)
        if sum(ts.footprints) > cfg.input_buf_words:
            raise InfeasibleTileError(
                f"tile {extents} needs {sum(ts.footprints)} input words; "
                f"buffers hold {cfg.input_buf_words}"
            )
        if ts.psum_words > cfg.psum_words:
            raise InfeasibleTileError(
                f"tile {extents} needs {ts.psum_words} accumulators; "
                f"buffer holds {cfg.psum_words}"
            )
    else:
        ts, _ = plan_tiles(w, cfg)
    sp = sharing_axes(w, ts, (cfg.mesh_rows, cfg.mesh_cols),
                      {k: int(v) for k, v in spec.assignment.items()} if spec.assignment else None,
                      sharing_enabled=spec.sharing)
    print(f"workload\t{w.name}")
    print(f"tile_extents\t{','.join(map(str, ts.extents))}")
    print(f"input_footprints_words\t{','.join(map(str, ts.footprints))}")
    print(f"psum_words\t{ts.psum_words}")
    print(f"bandwidth_per_mac\t{ts.bandwidth_per_mac.numerator}/{ts.bandwidth_per_mac.denominator}")
    print(f"macs_per_tile\t{ts.macs}")
    print(sp.to_json())
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = spec_from_args(args)
    out_dir = Path(args.out) if args.out else None
    res, rows = execute_spec(spec, out_dir, trace=args.trace)
    for k, v in rows:
        print(f"{k}\t{v}")
    return EXIT_OK


def _sweep_cell(payload):
    spec_dict, out_root, trace = payload
    spec = RunSpec(**spec_dict)
    cell = f"{spec.arch.replace('-', '_')}_{spec.pes}_{spec.workload.replace(' ', '_')}"
    out_dir = Path(out_root) / cell if out_root else None
    try:
        res, rows = execute_spec(spec, out_dir, trace=trace)
        d = dict(rows)
        return {
            "ok": True,
            "arch": spec.arch,
            "workload": spec.workload,
            "pes": spec.pes,
            "gops": float(d["gops"]),
            "roofline_gops": float(d["roofline_gops"]),
            "glb_norm": float(d["glb_norm_bytes_per_kmac"]),
            "dram_norm": float(d["dram_norm_bytes_per_kmac"]),
            "utilization": float(d["utilization"]),
            "cell": cell,
        }
    except UnsupportedWorkloadError as e:
        return {"ok": False, "arch": spec.arch, "workload": spec.workload,
                "pes": spec.pes, "error": f"unsupported: {e}", "cell": cell}
    except Exception as e:  # recorded, sweep continues
        return {"ok": False, "arch": spec.arch, "workload": spec.workload,
                "pes": spec.pes, "error": f"{type(e).__name__}: {e}", "cell": cell}


def cmd_sweep(args) -> int:
    base = spec_from_args(args)
    arches = ARCHES if args.arch in (None, "all") else tuple(args.arch.split(","))
    if args.workload in (None, "all", "classic"):
        names = [e.name for e in catalog.catalog("classic" if args.workload != "all" else None)]
    else:
        names = args.workload.split(",")
    pes_list = [128, 512] if args.pes is None else [args.pes]
    cells = []
    for arch in arches:
        for pes in pes_list:
            for name in names:
                d = base.__dict__.copy()
                d.update(arch=arch, workload=name, pes=pes)
                cells.append((d, args.out, False))
    workers = max(1, args.workers or 1)
    if workers == 1:
        results = [_sweep_cell(c) for c in cells]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_cell, cells))
    rows = [r for r in results if r["ok"]]
    fails = [r for r in results if not r["ok"]]
    rep = analysis.report([
        {"arch": f"{r['arch']}@{r['pes']}", "workload": r["workload"],
         "gops": r["gops"], "glb_norm": r["glb_norm"], "dram_norm": r["dram_norm"]}
        for r in rows
    ])
    lines = ["arch\tpes\tworkload\tgops\troofline_gops\tglb_norm\tdram_norm\tutilization"]
    for r in sorted(rows, key=lambda r: (r["arch"], r["pes"], r["workload"])):
        lines.append(
            f"{r['arch']}\t{r['pes']}\t{r['workload']}\t{r['gops']:.4f}\t"
            f"{r['roofline_gops']:.4f}\t{r['glb_norm']:.4f}\t{r['dram_norm']:.4f}\t"
            f"{r['utilization']:.4f}"
        )
    for r in fails:
        lines.append(f"{r['arch']}\t{r['pes']}\t{r['workload']}\tFAILED\t{r['error']}\t\t\t")
    lines.append("")
    lines.append("aggregate\tarch@pes\tn\tmean_gops\tgmean_gops\tgmean_glb\tgmean_dram\tarea_eff")
    for arch, agg in rep["aggregates"].items():
        base_arch, _, pes_s = arch.partition("@")
        am = analysis.AREA_MODELS[base_arch]
        mult = 4 if pes_s == "512" else 1
        eff = analysis.area_efficiency(agg["mean_gops"], am.area_factor, mult)
        lines.append(
            f"aggregate\t{arch}\t{agg['n']}\t{agg['mean_gops']:.4f}\t{agg['gmean_gops']:.4f}"
            f"\t{agg['gmean_glb_norm']:.4f}\t{agg['gmean_dram_norm']:.4f}\t{eff:.4f}"
        )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "report.tsv").write_text(text)
    return EXIT_OK


def cmd_report(args) -> int:
    """Re-aggregate a sweep report and emit roofline plot series."""
    path = Path(args.input)
    if not path.exists():
        raise SpecError(f"no report at {path}")
    lines = path.read_text().splitlines()
    hdr = lines[0].split("\t")
    series: dict[str, list] = {}
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != len(hdr) or parts[0] == "aggregate" or parts[3] == "FAILED":
            continue
        row = dict(zip(hdr, parts))
        w = catalog.build(row["workload"])
        oi = analysis.operational_intensity(w)
        key = f"{row['arch']}_{row['pes']}"
        series.setdefault(key, []).append((row["workload"], oi, float(row["gops"])))
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    for key, entries in sorted(series.items()):
        pts = analysis.roofline_series(entries)
        p = out / f"roofline_{key}.tsv"
        p.write_text(
            "workload\toi_macs_per_byte\tgops\n"
            + "\n".join(f"{n}\t{x:.6f}\t{y:.6f}" for n, x, y in pts)
            + "\n"
        )
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vectormesh", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run spec (versioned schema)")
        p.add_argument("--arch", choices=ARCHES + ("all",))
        p.add_argument("--workload", help="catalog name or inline spec")
        p.add_argument("--spatial", type=int, help="feature-map side override")
        p.add_argument("--pes", type=int, choices=(128, 512))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("list-workloads", help="print the workload catalog")
    p.add_argument("--filter", help="substring filter on names")
    p.set_defaults(fn=cmd_list_workloads)

    p = sub.add_parser("schedule", help="print the chosen tile and sharing plan")
    common(p)
    p.add_argument("--tile", help="comma-separated tile extents override")
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("simulate", help="run one workload on one machine")
    common(p)
    p.add_argument("--trace", action="store_true", help="write per-event trace")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="run a grid of cells and aggregate")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("report", help="emit roofline series from a sweep report")
    p.add_argument("--input", required=True, help="path to report.tsv")
    p.add_argument("--out", help="output directory for series files")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SpecError, ConfigError, InfeasibleTileError, AssignmentError, GeometryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedWorkloadError as e:
        print(f"unsupported workload: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (AssertionError, RoutingError, LoweringError, RuntimeError) as e:
        print(f"internal assertion: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
