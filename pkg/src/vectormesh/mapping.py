"""Mesh sharing plans and per-TEU lowering.

Sharing: TEUs in one mesh row process tiles that differ only in the
column-assigned parallel index, so any tensor whose index map has a zero
Jacobian column for that index needs exactly one buffer copy per row; the
copy travels over the horizontal FIFOs.  The symmetric rule applies down
columns, and a tensor invariant to both assigned indices is fetched once
for the whole mesh.

Lowering: a 32-lane PE group consumes one 32-point slice of a tile's
parallel face per cycle.  The face is factored over the parallel axes
(product of per-axis lane counts = 32), each input tensor gets a padded,
phase-shuffled buffer layout, and every distinct per-cycle offset pattern
is proven conflict-free and butterfly-routable at lowering time.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .butterfly import BankAccess, BankLayout, build_layout, check_conflict_free, route
from .tiling import TileScheme
from .workloads import Workload

__all__ = [
    "AssignmentError",
    "SharingPlan",
    "sharing_axes",
    "TEUProgram",
    "LoweringError",
    "lower_to_teu",
]


class AssignmentError(ValueError):
    """Mesh axis assigned to something other than a parallel index."""


class LoweringError(RuntimeError):
    """No lane factorization yields serviceable access patterns."""


def split_ranges(extent: int, tile: int) -> tuple[tuple[int, int], ...]:
    """Clip an axis into tile-sized inclusive ranges; the last may be short."""
    out = []
    lo = 0
    while lo < extent:
        hi = min(lo + tile, extent) - 1
        out.append((lo, hi))
        lo = hi + 1
    return tuple(out)


def block_split(n_items: int, n_owners: int) -> tuple[tuple[int, ...], ...]:
    """Contiguous balanced ownership of n_items among n_owners."""
    base, extra = divmod(n_items, n_owners)
    out = []
    start = 0
    for i in range(n_owners):
        size = base + (1 if i < extra else 0)
        out.append(tuple(range(start, start + size)))
        start += size
    return tuple(out)


@dataclass
class SharingPlan:
    """Tile-to-TEU assignment plus per-tensor sharing directions.

    Tiles along the row-assigned axis are owned block-contiguously by mesh
    rows (likewise columns); remaining parallel axes are swept by every
    TEU.  Phases advance all TEUs through their job lists in lockstep
    order, refreshing shared tensors over the FIFOs each step; this
    blocked-advance rule is the recorded generalization of the two-phase
    picture and is flagged in serialized output.
    """

    mesh_rows: int
    mesh_cols: int
    row_axis: int | None
    col_axis: int | None
    par_tiles: tuple[tuple[tuple[int, int], ...], ...]
    tmp_tiles: tuple[tuple[tuple[int, int], ...], ...]
    owned_rows: tuple[tuple[int, ...], ...]
    owned_cols: tuple[tuple[int, ...], ...]
    shareable: dict = field(default_factory=dict)  # (tensor_idx, "row"|"col") -> bool
    share_dir: tuple = ()  # per tensor: "row" | "col" | "both" | None
    sharing_enabled: bool = True
    outer_axes: tuple[int, ...] = ()

    @property
    def phase_rule(self) -> str:
        return "blocked-advance"

    def n_jobs(self, r: int, c: int) -> int:
        n = len(self.owned_rows[r]) if self.row_axis is not None else 1
        m = len(self.owned_cols[c]) if self.col_axis is not None else 1
        outer = 1
        for a in self.outer_axes:
            outer *= len(self.par_tiles[a])
        return n * m * outer

    def jobs_for(self, r: int, c: int):
        """Ordered parallel-tile boxes for one TEU, with alignment keys.

        A job key is (outer tile index vector, local row slot, local col
        slot); TEUs in one chain hit equal keys in equal order, which is
        what lets a forwarded tensor land where it is expected.
        """
        rows = self.owned_rows[r] if self.row_axis is not None else (None,)
        cols = self.owned_cols[c] if self.col_axis is not None else (None,)
        outer_lists = [range(len(self.par_tiles[a])) for a in self.outer_axes]
        jobs = []
        for outer in itertools.product(*outer_lists):
            for ri_slot, ri in enumerate(rows):
                for ci_slot, ci in enumerate(cols):
                    box = []
                    for a in range(len(self.par_tiles)):
                        if a == self.row_axis:
                            box.append(self.par_tiles[a][ri])
                        elif a == self.col_axis:
                            box.append(self.par_tiles[a][ci])
                        else:
                            pos = self.outer_axes.index(a)
                            box.append(self.par_tiles[a][outer[pos]])
                    jobs.append(((outer, ri_slot, ci_slot), tuple(box)))
        return jobs

    def max_job_slots(self) -> int:
        """Longest job list over the mesh; chains pace themselves by slots."""
        best = 0
        for r in range(self.mesh_rows):
            for c in range(self.mesh_cols):
                best = max(best, self.n_jobs(r, c))
        return best

    def to_json(self) -> str:
        return json.dumps(
            {
                "mesh": [self.mesh_rows, self.mesh_cols],
                "row_axis": self.row_axis,
                "col_axis": self.col_axis,
                "phase_rule": self.phase_rule,
                "sharing_enabled": self.sharing_enabled,
                "shareable": {f"{i}:{ax}": v for (i, ax), v in sorted(self.shareable.items())},
                "share_dir": list(self.share_dir),
                "tiles_per_axis": [len(t) for t in self.par_tiles],
                "temporal_tiles_per_axis": [len(t) for t in self.tmp_tiles],
            },
            indent=2,
            sort_keys=True,
        )


def default_assignment(w: Workload, mesh: tuple[int, int]) -> dict:
    """Map mesh rows and columns to the two largest parallel extents."""
    order = sorted(range(w.parallel_count), key=lambda a: (-w.parallel_extents[a], a))
    out = {"row": order[0] if order else None, "col": None}
    if len(order) > 1:
        out["col"] = order[1]
    return out


def sharing_axes(
    w: Workload,
    scheme: TileScheme,
    mesh: tuple[int, int],
    axis_assignment: dict | None = None,
    sharing_enabled: bool = True,
) -> SharingPlan:
    """Build the sharing plan for a tiled workload on an R x C mesh."""
    rows, cols = mesh
    if rows < 1 or cols < 1:
        raise AssignmentError("mesh must be at least 1x1")
    if axis_assignment is None:
        axis_assignment = default_assignment(w, mesh)
    row_axis = axis_assignment.get("row")
    col_axis = axis_assignment.get("col")
    for name, a in (("row", row_axis), ("col", col_axis)):
        if a is not None and not (0 <= a < w.parallel_count):
            raise AssignmentError(
                f"mesh {name} axis {a} is not a parallel index (parallel count "
                f"{w.parallel_count})"
            )
    if row_axis is not None and row_axis == col_axis:
        raise AssignmentError("row and col cannot split the same index")

    pc = w.parallel_count
    par_tiles = tuple(
        split_ranges(w.ndrange.extents[a], scheme.extents[a]) for a in range(pc)
    )
    tmp_tiles = tuple(
        split_ranges(w.ndrange.extents[pc + i], scheme.extents[pc + i])
        for i in range(w.ndrange.rank - pc)
    )
    owned_rows = (
        block_split(len(par_tiles[row_axis]), rows) if row_axis is not None else ((),) * rows
    )
    owned_cols = (
        block_split(len(par_tiles[col_axis]), cols) if col_axis is not None else ((),) * cols
    )

    shareable = {}
    share_dir = []
    for i, t in enumerate(w.inputs):
        row_ok = row_axis is not None and not t.index_map.depends_on(row_axis)
        col_ok = col_axis is not None and not t.index_map.depends_on(col_axis)
        shareable[(i, "row")] = row_ok
        shareable[(i, "col")] = col_ok
        solo = rows * cols == 1 or not sharing_enabled
        if solo:
            share_dir.append(None)
        elif row_ok and col_ok and rows > 1 and cols > 1:
            share_dir.append("both")
        elif col_ok and cols > 1:
            share_dir.append("col")
        elif row_ok and rows > 1:
            share_dir.append("row")
        else:
            share_dir.append(None)

    outer = tuple(a for a in range(pc) if a not in (row_axis, col_axis))
    return SharingPlan(
        mesh_rows=rows,
        mesh_cols=cols,
        row_axis=row_axis,
        col_axis=col_axis,
        par_tiles=par_tiles,
        tmp_tiles=tmp_tiles,
        owned_rows=owned_rows,
        owned_cols=owned_cols,
        shareable=shareable,
        share_dir=tuple(share_dir),
        sharing_enabled=sharing_enabled and rows * cols > 1,
        outer_axes=outer,
    )


# ---------------------------------------------------------------------------
# Lowering one tile onto the 32-lane PE group


def _lane_axis_fields(pe_grid: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    """(shift, bits) of each parallel axis's lane-bit field; axis 0 highest."""
    fields = []
    shift = sum(p.bit_length() - 1 for p in pe_grid)
    for p in pe_grid:
        bits = p.bit_length() - 1
        shift -= bits
        fields.append((shift, bits))
    return tuple(fields)


def _tensor_lane_info(w: Workload, tensor_idx: int, pe_grid: tuple[int, ...]):
    """Per tensor dim: (lane span, step) induced by the laned parallel axes.

    Fails if two laned axes drive the same tensor dimension (their lane
    walks would collide in the buffer) or if nesting order flips.
    """
    t = w.inputs[tensor_idx]
    rank = len(t.shape)
    spans = [1] * rank
    steps = [1] * rank
    last_dim = -1
    for a, p in enumerate(pe_grid):
        if p == 1:
            continue
        dims = [d for d in range(rank) if t.index_map.matrix[d][a] != 0]
        if not dims:
            continue  # broadcast axis for this tensor
        if len(dims) > 1:
            return None  # one lane axis moving two coordinates at once
        d = dims[0]
        if spans[d] != 1:
            return None  # two lane axes on one dim
        if d <= last_dim:
            return None  # lane bit order would not nest with storage order
        last_dim = d
        coef = t.index_map.matrix[d][a]
        if coef < 0:
            return None
        spans[d] = p
        steps[d] = coef
    return tuple(spans), tuple(steps)


def tile_box_extents(w: Workload, tensor_idx: int, extents: tuple[int, ...]) -> tuple[int, ...]:
    box = tuple((0, e - 1) for e in extents)
    t = w.inputs[tensor_idx]
    out = []
    for dim in range(len(t.shape)):
        lo, hi = t.index_map.coord_interval(dim, box)
        out.append(hi - lo + 1)
    return tuple(out)


@dataclass(frozen=True)
class TEUProgram:
    """Lowered form of one tile: lane factorization, buffer layouts, and
    the proven-serviceable per-cycle access pattern classes."""

    pe_grid: tuple[int, ...]  # per parallel axis, product = lane count
    layouts: tuple[BankLayout, ...]  # per input tensor
    patterns: tuple[BankAccess, ...]  # per-cycle lane offsets, base 0
    issues_per_step: int  # face slices per temporal step
    temporal_steps: int
    face_points: int
    bank_bits: int = 5

    @property
    def lanes(self) -> int:
        return 1 << self.bank_bits

    @property
    def cycles(self) -> int:
        return self.issues_per_step * self.temporal_steps

    @property
    def bubble_lane_cycles(self) -> int:
        return (self.issues_per_step * self.lanes - self.face_points) * self.temporal_steps

    @property
    def macs(self) -> int:
        return self.face_points * self.temporal_steps

    def buffer_words(self) -> tuple[int, ...]:
        return tuple(l.words for l in self.layouts)


def _candidate_grids(par_extents: tuple[int, ...], lane_bits: int):
    """All ways to spend lane bits across parallel axes, best packing first."""
    n = len(par_extents)
    cands = []
    for combo in itertools.product(range(lane_bits + 1), repeat=n):
        if sum(combo) != lane_bits:
            continue
        grid = tuple(1 << b for b in combo)
        padded = 1
        for e, p in zip(par_extents, grid):
            padded *= -(-e // p) * p
        cands.append((padded, combo, grid))
    cands.sort(key=lambda x: (x[0], x[1]))
    return [g for _, _, g in cands]


def lower_to_teu(
    w: Workload,
    scheme: TileScheme,
    pe_factorization: tuple[int, ...] | None = None,
    lanes: int = 32,
) -> TEUProgram:
    """Factor a tile's parallel face over the PE lanes and prove every
    resulting buffer access pattern serviceable in one cycle.

    When no factorization is given, candidates are tried in order of
    least padded-face waste; a candidate is accepted only if every input
    tensor gets a layout whose lane pattern passes the bank check and the
    switch routing simulation.
    """
    bank_bits = lanes.bit_length() - 1
    if 1 << bank_bits != lanes:
        raise LoweringError(f"lane count {lanes} must be a power of two")
    pc = w.parallel_count
    par = scheme.extents[:pc]
    tmp = scheme.extents[pc:]

    grids = [pe_factorization] if pe_factorization is not None else _candidate_grids(par, bank_bits)
    last_err = None
    for grid in grids:
        prod = 1
        for p in grid:
            prod *= p
        if len(grid) != pc or prod != lanes:
            if pe_factorization is not None:
                raise LoweringError(f"factorization {grid} does not multiply to {lanes}")
            continue
        fields = _lane_axis_fields(grid)
        layouts = []
        patterns = []
        ok = True
        for ti, t in enumerate(w.inputs):
            info = _tensor_lane_info(w, ti, grid)
            if info is None:
                ok = False
                last_err = f"grid {grid} collides on tensor {t.name}"
                break
            spans, steps = info
            box = tile_box_extents(w, ti, scheme.extents)
            layout = build_layout(box, spans, steps, bank_bits)
            # offsets of each lane, using the global lane-bit fields
            offs = []
            for lane in range(lanes):
                off = 0
                for a, (shift, bits) in enumerate(fields):
                    if bits == 0:
                        continue
                    coord = (lane >> shift) & ((1 << bits) - 1)
                    dims = [
                        d
                        for d in range(len(t.shape))
                        if t.index_map.matrix[d][a] != 0
                    ]
                    if dims:
                        off += coord * layout.dims[dims[0]].pitch_q
                offs.append(off)
            pattern = BankAccess(tuple(offs), bank_bits)
            chk = check_conflict_free(pattern)
            if not chk.ok:
                ok = False
                last_err = f"grid {grid} conflicts on tensor {t.name}"
                break
            try:
                route(pattern)
            except Exception as e:  # routing failure disqualifies the grid
                ok = False
                last_err = f"grid {grid} unroutable on tensor {t.name}: {e}"
                break
            layouts.append(layout)
            patterns.append(pattern)
        if not ok:
            if pe_factorization is not None:
                raise LoweringError(last_err)
            continue

        issues = 1
        face = 1
        for e, p in zip(par, grid):
            issues *= -(-e // p)
            face *= e
        steps = 1
        for e in tmp:
            steps *= e
        return TEUProgram(
            pe_grid=grid,
            layouts=tuple(layouts),
            patterns=tuple(patterns),
            issues_per_step=issues,
            temporal_steps=steps,
            face_points=face,
            bank_bits=bank_bits,
        )
    raise LoweringError(last_err or "no viable lane factorization")


def iter_cycles(w: Workload, scheme: TileScheme, prog: TEUProgram):
    """Expand the program into explicit per-cycle address vectors.

    Intended for small tiles in tests: yields, per cycle, the per-tensor
    lane address tuples (None for idle lanes past the face edge) and the
    accumulator slot per lane.
    """
    pc = w.parallel_count
    par = scheme.extents[:pc]
    tmp = scheme.extents[pc:]
    fields = _lane_axis_fields(prog.pe_grid)
    blocks = [range(-(-e // p)) for e, p in zip(par, prog.pe_grid)]
    lane_coords = []
    for lane in range(prog.lanes):
        lane_coords.append(
            tuple((lane >> s) & ((1 << b) - 1) for s, b in fields)
        )
    for step in itertools.product(*[range(e) for e in tmp]):
        for blk in itertools.product(*blocks):
            per_tensor = []
            for ti, t in enumerate(w.inputs):
                layout = prog.layouts[ti]
                addrs = []
                for lane in range(prog.lanes):
                    pt = []
                    valid = True
                    for a in range(pc):
                        v = blk[a] * prog.pe_grid[a] + lane_coords[lane][a]
                        if v >= par[a]:
                            valid = False
                        pt.append(min(v, par[a] - 1))
                    pt.extend(step)
                    if not valid:
                        addrs.append(None)
                        continue
                    coord = t.index_map.apply(tuple(pt))
                    lo_corner = [
                        t.index_map.coord_interval(d, tuple((0, e - 1) for e in scheme.extents))[0]
                        for d in range(len(t.shape))
                    ]
                    deltas = tuple(c - lo for c, lo in zip(coord, lo_corner))
                    addrs.append(layout.address(deltas))
                per_tensor.append(tuple(addrs))
            slots = []
            for lane in range(prog.lanes):
                slot = 0
                ok = True
                for a in range(pc):
                    v = blk[a] * prog.pe_grid[a] + lane_coords[lane][a]
                    if v >= par[a]:
                        ok = False
                        break
                    slot = slot * par[a] + v
                slots.append(slot if ok else None)
            yield tuple(per_tensor), tuple(slots)
