"""Event-stepped simulation of the FIFO-mesh machine.

A machine is a grid of tile execution units (TEUs), each with two banked
input buffers, a PSum buffer, and a 32-lane PE group fed through the
butterfly network.  Shared DRAM and global-buffer channels grant bytes
round-robin per cycle; neighbor FIFOs move one 32-word entry per cycle
per direction, cut-through.

Execution is tile-granular: each TEU walks its job list (output tiles)
and streams temporal sub-tiles through it, prefetching the next unit's
input deltas while computing the current one.  Every distinct buffer
access pattern was proven conflict-free at lowering time and is
re-checked here once per run, so per-cycle bank behavior is covered
without enumerating cycles one by one; timing and byte counters are exact
under this model.

Outputs are computed with the same exact integer arithmetic as the
functional oracle but along the machine's own tiled accumulation order,
so a mismatch flags a scheduling or footprint bug, not float noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, asdict

import numpy as np

from .butterfly import check_conflict_free, route
from .engine import ByteChannel, Future, Sim
from .mapping import LoweringError, SharingPlan, TEUProgram, lower_to_teu, sharing_axes
from .tiling import TileScheme, ranked_tiles
from .workloads import Workload

__all__ = ["ArchConfig", "SimResult", "ConfigError", "Machine", "build_machine", "plan_tiles", "run"]

STALL_KEYS = ("dram", "glb", "fifo_empty", "fifo_full", "tile_bubble")


class ConfigError(ValueError):
    """Invalid machine configuration."""


@dataclass(frozen=True)
class ArchConfig:
    """Mesh geometry, per-TEU resources, and memory-system rates."""

    mesh_rows: int = 2
    mesh_cols: int = 2
    pes_per_teu: int = 32
    input_buf_bytes: int = 16384  # total across the two input buffers
    psum_buf_bytes: int = 5120
    fifo_depth_entries: int = 4
    fifo_entry_words: int = 32
    glb_bytes: int = 2048
    clock_hz: float = 2.0e8
    dram_bytes_per_sec: float = 6.4e9
    glb_bytes_per_sec: float = 2.56e10
    dram_latency_cycles: int = 100
    word_bytes: int = 2
    psum_bytes: int = 4

    def __post_init__(self):
        if self.mesh_rows < 1 or self.mesh_cols < 1:
            raise ConfigError("mesh must be at least 1x1")
        p = self.pes_per_teu
        if p < 2 or p & (p - 1):
            raise ConfigError(f"pes_per_teu={p} must be a power of two (banked buffers)")
        for name in (
            "input_buf_bytes", "psum_buf_bytes", "fifo_depth_entries", "fifo_entry_words",
            "glb_bytes", "clock_hz", "dram_bytes_per_sec", "glb_bytes_per_sec",
            "word_bytes", "psum_bytes",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.dram_latency_cycles < 0:
            raise ConfigError("dram_latency_cycles must be >= 0")
        if self.fifo_depth_entries < 2:
            raise ConfigError("cut-through forwarding needs FIFO depth >= 2")

    @property
    def n_teus(self) -> int:
        return self.mesh_rows * self.mesh_cols

    @property
    def n_pes(self) -> int:
        return self.n_teus * self.pes_per_teu

    @property
    def bank_bits(self) -> int:
        return self.pes_per_teu.bit_length() - 1

    @property
    def input_buf_words(self) -> int:
        return self.input_buf_bytes // self.word_bytes

    @property
    def per_buffer_words(self) -> int:
        return self.input_buf_words // 2

    @property
    def psum_words(self) -> int:
        return self.psum_buf_bytes // self.psum_bytes

    @property
    def dram_bytes_per_cycle(self) -> int:
        v = int(self.dram_bytes_per_sec // self.clock_hz)
        if v < 1:
            raise ConfigError("DRAM slower than one byte per cycle")
        return v

    @property
    def glb_bytes_per_cycle(self) -> int:
        v = int(self.glb_bytes_per_sec // self.clock_hz)
        if v < 1:
            raise ConfigError("GLB slower than one byte per cycle")
        return v

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimResult:
    cycles: int
    macs: int
    glb_read_bytes: int
    glb_write_bytes: int
    dram_read_bytes: int
    dram_write_bytes: int
    fifo_words_transferred: int
    stall_cycles: dict
    bubble_lane_cycles: int
    output: np.ndarray
    utilization: float
    extras: dict = field(default_factory=dict)

    def stats_rows(self) -> list[tuple[str, str]]:
        rows = [
            ("cycles", str(self.cycles)),
            ("macs", str(self.macs)),
            ("glb_read_bytes", str(self.glb_read_bytes)),
            ("glb_write_bytes", str(self.glb_write_bytes)),
            ("dram_read_bytes", str(self.dram_read_bytes)),
            ("dram_write_bytes", str(self.dram_write_bytes)),
            ("fifo_words_transferred", str(self.fifo_words_transferred)),
            ("bubble_lane_cycles", str(self.bubble_lane_cycles)),
            ("utilization", f"{self.utilization:.6f}"),
        ]
        for k in STALL_KEYS:
            rows.append((f"stall_{k}", str(self.stall_cycles.get(k, 0))))
        for k in sorted(self.extras):
            rows.append((k, str(self.extras[k])))
        return rows


def plan_tiles(w: Workload, cfg: ArchConfig, exhaustive: bool = False, bpm_slack: float = 1.25):
    """Pick the tile to actually run.

    Candidates come ranked by exact bandwidth per MAC; within a small
    slack window over the minimum, the planner prefers tiles whose face
    packs the 32-lane group with the least padding (a marginally worse
    fetch ratio is cheaper than idle lanes on compute-bound layers).
    Tiles whose padded layouts overflow the physical buffers are skipped.
    """
    from .mapping import _candidate_grids, block_split, default_assignment, split_ranges

    tiles = ranked_tiles(w, cfg.input_buf_words, cfg.psum_words, exhaustive=exhaustive)
    best_bpm = tiles[0].bandwidth_per_mac
    pc = w.parallel_count
    assign = default_assignment(w, (cfg.mesh_rows, cfg.mesh_cols))
    axis_width = {}
    if assign.get("row") is not None:
        axis_width[assign["row"]] = cfg.mesh_rows
    if assign.get("col") is not None:
        axis_width[assign["col"]] = cfg.mesh_cols
    lane_bits = cfg.pes_per_teu.bit_length() - 1

    def domain_waste(ts: TileScheme, grid) -> float:
        """Lane slots over the whole domain relative to real face points:
        edge tiles pad to the lane grid, and along mesh-assigned axes the
        busiest owner paces the whole row or column of TEUs."""
        padded = 1
        face_total = 1
        for a in range(pc):
            p = grid[a]
            issues = [-(-(hi - lo + 1) // p) for lo, hi in
                      split_ranges(w.ndrange.extents[a], ts.extents[a])]
            width = axis_width.get(a)
            if width and len(issues) > 1:
                owners = block_split(len(issues), width)
                load = max(sum(issues[i] for i in own) for own in owners)
                eff = load * width
            else:
                eff = sum(issues)
            padded *= eff * p
            face_total *= w.ndrange.extents[a]
        return padded / face_total

    # rank the slack window arithmetically first; lowering (layout builds
    # plus routing proofs) is costly, so it runs lazily down that order
    window = []
    for ts in tiles:
        if ts.bandwidth_per_mac > best_bpm * bpm_slack:
            break
        grid_est = _candidate_grids(ts.extents[:pc], lane_bits)[0]
        window.append(((domain_waste(ts, grid_est), ts.bandwidth_per_mac,
                        -ts.macs, ts.extents), ts))
    window.sort(key=lambda x: x[0])
    for _, ts in window:
        try:
            prog = lower_to_teu(w, ts, lanes=cfg.pes_per_teu)
        except LoweringError:
            continue
        if any(words > cfg.per_buffer_words for words in prog.buffer_words()):
            continue
        return ts, prog
    # nothing in the slack window lowers; fall back to the full ranking
    for ts in tiles:
        try:
            prog = lower_to_teu(w, ts, lanes=cfg.pes_per_teu)
        except LoweringError:
            continue
        if all(words <= cfg.per_buffer_words for words in prog.buffer_words()):
            return ts, prog
    raise LoweringError(f"{w.name}: no enumerated tile has a fitting padded layout")


def build_machine(cfg: ArchConfig) -> "Machine":
    return Machine(cfg)


def _box_volume(box) -> int:
    v = 1
    for lo, hi in box:
        if hi < lo:
            return 0
        v *= hi - lo + 1
    return v


def _box_overlap(a, b) -> int:
    v = 1
    for (alo, ahi), (blo, bhi) in zip(a, b):
        lo, hi = max(alo, blo), min(ahi, bhi)
        if hi < lo:
            return 0
        v *= hi - lo + 1
    return v


def _contains(outer, inner) -> bool:
    return all(olo <= ilo and ihi <= ohi for (olo, ohi), (ilo, ihi) in zip(outer, inner))


class _TeuState:
    __slots__ = ("r", "c", "jobs", "fetch_tail", "done_time", "prev_end")

    def __init__(self, r, c, jobs):
        self.r = r
        self.c = c
        self.jobs = jobs
        # tensor idx -> last box issued to the fetch pipeline; deltas are
        # counted against it, modeling data still resident from the
        # previous unit while the next streams in behind it
        self.fetch_tail = {}
        self.done_time = 0
        self.prev_end = 0


class Machine:
    """One simulation instance; single-threaded, one run at a time."""

    def __init__(self, cfg: ArchConfig):
        self.cfg = cfg

    def run(
        self,
        w: Workload,
        ts: TileScheme,
        sp: SharingPlan,
        inputs,
        prog: TEUProgram | None = None,
        trace: list | None = None,
    ) -> SimResult:
        cfg = self.cfg
        if isinstance(inputs, dict):
            arrays = [np.asarray(inputs[t.name]) for t in w.inputs]
        else:
            arrays = [np.asarray(a) for a in inputs]
        for t, a in zip(w.inputs, arrays):
            if a.shape != t.shape:
                raise ValueError(f"tensor {t.name}: shape {a.shape} != {t.shape}")
        if prog is None:
            prog = lower_to_teu(w, ts, lanes=cfg.pes_per_teu)
        if sp.mesh_rows != cfg.mesh_rows or sp.mesh_cols != cfg.mesh_cols:
            raise ConfigError("sharing plan mesh does not match machine mesh")

        # once per run: re-verify every issued pattern class before cycling
        for ti, pattern in enumerate(prog.patterns):
            chk = check_conflict_free(pattern)
            if not chk.ok:
                raise AssertionError(
                    f"scheduler bug: tensor {w.inputs[ti].name} pattern conflicts"
                )
            route(pattern)

        sim = Sim()
        dram = ByteChannel(sim, "dram", cfg.dram_bytes_per_cycle, cfg.dram_latency_cycles)
        glb = ByteChannel(sim, "glb", cfg.glb_bytes_per_cycle, 0)
        flat_inputs = [a.reshape(-1).astype(np.int64, copy=False) for a in arrays]
        out = np.zeros(w.output_shape, dtype=np.int64)

        counters = {
            "glb_read_bytes": 0,
            "glb_write_bytes": 0,
            "dram_read_bytes": 0,
            "dram_write_bytes": 0,
            "fifo_words": 0,
            "bubble_lane_cycles": 0,
            "macs": 0,
        }
        stalls = {k: 0 for k in STALL_KEYS}
        wb_times: list[int] = []
        tmp_extents = w.temporal_extents
        pc = w.parallel_count

        teus = {}
        for r in range(cfg.mesh_rows):
            for c in range(cfg.mesh_cols):
                teus[(r, c)] = _TeuState(r, c, sp.jobs_for(r, c))

        # ---- sharing chains -------------------------------------------------
        # chain id -> ordered TEU coords; first member fetches, rest receive
        def chain_of(ti, r, c):
            d = sp.share_dir[ti]
            if d is None:
                return None, 0
            if d == "col":
                return ("col", r), c
            if d == "row":
                return ("row", c), r
            return ("both", 0), r * sp.mesh_cols + c  # fetch at (0,0), row-major relay

        # shared-data futures, keyed (tensor, chain, unit key)
        shared: dict = {}

        def shared_future(key) -> Future:
            f = shared.get(key)
            if f is None:
                f = Future("fifo")
                shared[key] = f
            return f

        # how many TEUs in a chain still need unit slot `slot_key`
        def chain_span(ti, r, c, slot_key) -> int:
            d = sp.share_dir[ti]
            outer, ri_slot, ci_slot = slot_key
            if d == "col":
                last = 0
                for cc in range(sp.mesh_cols):
                    n = len(sp.owned_cols[cc]) if sp.col_axis is not None else 1
                    if ci_slot < n:
                        last = cc
                return last
            if d == "row":
                last = 0
                for rr in range(sp.mesh_rows):
                    n = len(sp.owned_rows[rr]) if sp.row_axis is not None else 1
                    if ri_slot < n:
                        last = rr
                return last
            # both: relay across row 0 then down each column
            return (sp.mesh_cols - 1) + sp.mesh_cols * (sp.mesh_rows - 1)

        def hop_distance(ti, r, c) -> int:
            d = sp.share_dir[ti]
            if d == "col":
                return c
            if d == "row":
                return r
            return c + r  # relay path length from (0,0)

        def emit(teu, event, nbytes):
            if trace is not None:
                trace.append((sim.now, f"{teu.r},{teu.c}", event, int(nbytes)))

        # ---- per-unit geometry ----------------------------------------------
        def unit_boxes(job_box, step_idx):
            dom = list(job_box)
            for a, si in enumerate(step_idx):
                dom.append(sp.tmp_tiles[a][si])
            dom_t = tuple(dom)
            per_tensor = []
            for t in w.inputs:
                box = tuple(
                    t.index_map.coord_interval(d, dom_t)
                    for d in range(len(t.shape))
                )
                per_tensor.append(box)
            return tuple(per_tensor)

        def fetch_words(teu, ti, box) -> int:
            prev = teu.fetch_tail.get(ti)
            need = _box_volume(box)
            ov = _box_overlap(prev, box) if prev is not None else 0
            teu.fetch_tail[ti] = box
            return need - ov

        def unit_compute_cycles(job_box, step_idx) -> tuple[int, int, int]:
            face = 1
            issues = 1
            for a in range(pc):
                e = job_box[a][1] - job_box[a][0] + 1
                face *= e
                issues *= -(-e // prog.pe_grid[a])
            tpts = 1
            for a, si in enumerate(step_idx):
                lo, hi = sp.tmp_tiles[a][si]
                tpts *= hi - lo + 1
            return issues * tpts, face, tpts

        word_bytes = [t.word_bytes for t in w.inputs]

        # ---- fetch/forward processes ----------------------------------------
        def fetch_proc(teu, ti, box, ready_fut, slot_key, step_idx):
            words = fetch_words(teu, ti, box)
            nbytes = words * word_bytes[ti]
            counters["dram_read_bytes"] += nbytes
            counters["glb_read_bytes"] += nbytes
            dram_fut = dram.submit(nbytes)
            yield ("wait", dram_fut)
            emit(teu, f"dram_read:{w.inputs[ti].name}", nbytes)
            glb_fut = glb.submit(nbytes)
            yield ("wait", glb_fut)
            emit(teu, f"glb_read:{w.inputs[ti].name}", nbytes)
            glb_leg = glb_fut.time - dram_fut.time
            ready_fut.payload = ("dram", glb_leg)
            ready_fut.kind = "dram"
            ready_fut.resolve(sim, sim.now, ready_fut.payload)
            # forward along the chain, cut-through: one entry per cycle,
            # one cycle of latency per hop
            cid, _pos = chain_of(ti, teu.r, teu.c)
            if cid is not None and sp.sharing_enabled:
                span = chain_span(ti, teu.r, teu.c, slot_key)
                if span > 0:
                    entries = -(-words // cfg.fifo_entry_words)
                    counters["fifo_words"] += words * span
                    base = sim.now + max(entries, 1)
                    for h in range(1, span + 1):
                        fut = shared_future((ti, cid, slot_key, step_idx, h))
                        fut.resolve(sim, base + h, ("fifo", 0))

        def issue_unit_fetches(teu, slot_key, job_box, step_idx):
            """Start (or look up) the data futures for one unit."""
            boxes = unit_boxes(job_box, step_idx)
            futs = []
            for ti in range(len(w.inputs)):
                cid, pos = chain_of(ti, teu.r, teu.c)
                if cid is None or not sp.sharing_enabled:
                    f = Future("dram")
                    sim.spawn(fetch_proc(teu, ti, boxes[ti], f, slot_key, step_idx))
                    futs.append((f, ti, boxes[ti]))
                elif pos == 0:
                    f = Future("dram")
                    sim.spawn(fetch_proc(teu, ti, boxes[ti], f, slot_key, step_idx))
                    futs.append((f, ti, boxes[ti]))
                else:
                    h = hop_distance(ti, teu.r, teu.c)
                    f = shared_future((ti, cid, slot_key, step_idx, h))
                    futs.append((f, ti, boxes[ti]))
            return futs

        # ---- numeric kernel --------------------------------------------------
        tensor_mats = [t.index_map.as_arrays() for t in w.inputs]
        tensor_strides = []
        for t in w.inputs:
            s = np.ones(len(t.shape), dtype=np.int64)
            for d in range(len(t.shape) - 2, -1, -1):
                s[d] = s[d + 1] * t.shape[d + 1]
            tensor_strides.append(s)
        out_strides = np.ones(pc, dtype=np.int64)
        for d in range(pc - 2, -1, -1):
            out_strides[d] = out_strides[d + 1] * w.output_shape[d + 1]
        out_flat = out.reshape(-1)

        def job_gather_parts(job_box):
            """Per tensor: flat-index contribution of the parallel face."""
            grids = np.meshgrid(
                *[np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in job_box],
                indexing="ij",
            )
            face_pts = grids[0].size if grids else 1
            parts = []
            for (mat, off), strides in zip(tensor_mats, tensor_strides):
                coef = strides @ mat
                part = np.zeros(face_pts, dtype=np.int64)
                for a in range(pc):
                    part += coef[a] * grids[a].reshape(-1)
                parts.append((part, coef[pc:], int(strides @ off)))
            out_idx = np.zeros(face_pts, dtype=np.int64)
            for a in range(pc):
                out_idx += out_strides[a] * grids[a].reshape(-1)
            return parts, out_idx

        def compute_unit(teu, parts, acc, job_box, step_idx, boxes):
            # the box the fetch pipeline staged must cover what the PE
            # group is about to read; a mismatch means issue and compute
            # drifted out of step
            needed = unit_boxes(job_box, step_idx)
            for ti, box in enumerate(boxes):
                if not _contains(box, needed[ti]):
                    raise AssertionError(
                        f"TEU {teu.r},{teu.c} reads {w.inputs[ti].name} outside its buffer"
                    )
            ranges = [range(sp.tmp_tiles[a][si][0], sp.tmp_tiles[a][si][1] + 1)
                      for a, si in enumerate(step_idx)]
            tpts = np.array(list(itertools.product(*ranges)), dtype=np.int64)
            if tpts.size == 0:
                tpts = np.zeros((1, 0), dtype=np.int64)
            first = True
            prod = None
            for (part, tmp_coef, base), flat in zip(parts, flat_inputs):
                scal = tpts @ tmp_coef + base if tpts.shape[1] else np.full(1, base, dtype=np.int64)
                idx = part[None, :] + scal[:, None]
                vals = flat[idx]
                if first:
                    prod = vals.copy()
                    first = False
                else:
                    prod *= vals
            acc += prod.sum(axis=0)

        # ---- TEU process ------------------------------------------------------
        def teu_proc(teu):
            units = []
            for slot_key, job_box in teu.jobs:
                steps = list(itertools.product(*[range(len(t)) for t in sp.tmp_tiles]))
                for si, step_idx in enumerate(steps):
                    units.append((slot_key, job_box, step_idx, si == len(steps) - 1))
            if not units:
                return
            pending = issue_unit_fetches(teu, units[0][0], units[0][1], units[0][2])
            parts = None
            acc = None
            out_idx = None
            cur_job = None
            for ui, (slot_key, job_box, step_idx, last_step) in enumerate(units):
                futs = [f for f, _, _ in pending]
                boxes = [b for _, _, b in pending]
                yield ("wait_all", futs)
                ready = max((f.time for f in futs), default=sim.now)
                start = max(teu.prev_end, ready, sim.now)
                if ready > teu.prev_end:
                    wait = ready - max(teu.prev_end, 0)
                    slowest = max(futs, key=lambda f: f.time)
                    if slowest.kind == "fifo":
                        stalls["fifo_empty"] += wait
                    else:
                        glb_leg = slowest.payload[1] if slowest.payload else 0
                        g = min(wait, glb_leg)
                        stalls["glb"] += g
                        stalls["dram"] += wait - g
                if start > sim.now:
                    yield ("sleep", start)
                # prefetch next unit while this one computes
                if ui + 1 < len(units):
                    nxt = units[ui + 1]
                    pending = issue_unit_fetches(teu, nxt[0], nxt[1], nxt[2])
                # numeric part
                if job_box != cur_job:
                    parts, out_idx = job_gather_parts(job_box)
                    acc = np.zeros(out_idx.size, dtype=np.int64)
                    cur_job = job_box
                compute_unit(teu, parts, acc, job_box, step_idx, boxes)
                cycles, face, tpts = unit_compute_cycles(job_box, step_idx)
                counters["macs"] += face * tpts
                counters["bubble_lane_cycles"] += (
                    cycles * cfg.pes_per_teu - face * tpts
                )
                emit(teu, "compute", 0)
                teu.prev_end = start + cycles
                if last_step:
                    np.add.at(out_flat, out_idx, acc)
                    nbytes = face * cfg.psum_bytes
                    counters["dram_write_bytes"] += nbytes
                    wb = dram.submit(nbytes)
                    emit(teu, "psum_writeback", nbytes)
                    def note(_t, wb=wb):
                        wb_times.append(wb.time)
                    wb.waiters.append(note)
                    cur_job = None
                yield ("sleep", teu.prev_end)
            teu.done_time = teu.prev_end

        for teu in teus.values():
            sim.spawn(teu_proc(teu))
        sim.run()

        end = max([t.done_time for t in teus.values()] + wb_times + [0])
        macs = counters["macs"]
        if macs != w.macs:
            raise AssertionError(f"covered {macs} MACs of {w.macs}: tiling bug")
        util = macs / (end * cfg.n_pes) if end else 0.0
        stalls["tile_bubble"] = counters["bubble_lane_cycles"] // cfg.pes_per_teu
        return SimResult(
            cycles=end,
            macs=macs,
            glb_read_bytes=counters["glb_read_bytes"],
            glb_write_bytes=counters["glb_write_bytes"],
            dram_read_bytes=counters["dram_read_bytes"],
            dram_write_bytes=counters["dram_write_bytes"],
            fifo_words_transferred=counters["fifo_words"],
            stall_cycles=stalls,
            bubble_lane_cycles=counters["bubble_lane_cycles"],
            output=out,
            utilization=util,
            extras={
                "arch": "vectormesh",
                "mesh": f"{cfg.mesh_rows}x{cfg.mesh_cols}",
                "n_pes": cfg.n_pes,
                "tile": "x".join(map(str, ts.extents)),
                "bandwidth_per_mac": str(ts.bandwidth_per_mac),
            },
        )


def run(
    w: Workload,
    cfg: ArchConfig,
    inputs,
    ts: TileScheme | None = None,
    sp: SharingPlan | None = None,
    axis_assignment: dict | None = None,
    sharing: bool = True,
    trace: list | None = None,
) -> SimResult:
    """Plan (if needed) and execute one workload on one machine."""
    prog = None
    if ts is None:
        ts, prog = plan_tiles(w, cfg)
    if sp is None:
        sp = sharing_axes(
            w, ts, (cfg.mesh_rows, cfg.mesh_cols), axis_assignment, sharing_enabled=sharing
        )
    return Machine(cfg).run(w, ts, sp, inputs, prog=prog, trace=trace)
