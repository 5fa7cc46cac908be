"""Tile-size search: partition a workload's domain into buffer-fitting
rectangular tiles and rank them by input words fetched per MAC.

A tile is described by one extent per domain index.  Its per-tensor
footprint is the exact bounding box of the affine image of the tile box;
keeping accumulators resident means output traffic is excluded from the
cost, so the figure of merit is (sum of input footprints) / (tile MACs),
held as an exact rational.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .workloads import Workload

__all__ = ["TileScheme", "InfeasibleTileError", "tile_footprints", "enumerate_tiles", "select_tile"]

# Axes at least this large fall back to a pruned candidate list instead of
# every integer extent, keeping deep loop nests enumerable.
EXHAUSTIVE_AXIS_LIMIT = 16
SEARCH_SPACE_CAP = 150_000


class InfeasibleTileError(ValueError):
    """Even a single-point tile exceeds a buffer; configuration is broken."""


@dataclass(frozen=True)
class TileScheme:
    """One rectangular partition choice.

    ``extents`` has one entry per domain index.  Edge tiles at domain
    boundaries simply have clipped extents; their traffic is accounted
    exactly by the simulator rather than amortized here.
    """

    extents: tuple[int, ...]
    footprints: tuple[int, ...]  # words per input tensor, spec order
    psum_words: int
    bandwidth_per_mac: Fraction

    @property
    def macs(self) -> int:
        n = 1
        for e in self.extents:
            n *= e
        return n

    @property
    def input_words(self) -> int:
        return sum(self.footprints)

    def sort_key(self):
        # minimal bandwidth first, then prefer more work per tile, then
        # the lexicographically smallest extent vector
        return (self.bandwidth_per_mac, -self.macs, self.extents)


def tile_footprints(w: Workload, extents: tuple[int, ...]) -> tuple[int, ...]:
    """Exact bounding-box word count of each input over a tile box."""
    box = tuple((0, e - 1) for e in extents)
    out = []
    for t in w.inputs:
        words = 1
        for dim in range(len(t.shape)):
            lo, hi = t.index_map.coord_interval(dim, box)
            words *= hi - lo + 1
        out.append(words)
    return tuple(out)


def make_scheme(w: Workload, extents: tuple[int, ...]) -> TileScheme:
    fps = tile_footprints(w, extents)
    psum = 1
    for e in extents[: w.parallel_count]:
        psum *= e
    macs = 1
    for e in extents:
        macs *= e
    return TileScheme(extents, fps, psum, Fraction(sum(fps), macs))


def _axis_candidates(extent: int, exhaustive: bool) -> list[int]:
    if exhaustive or extent <= EXHAUSTIVE_AXIS_LIMIT:
        return list(range(1, extent + 1))
    vals = {1, extent}
    for d in range(2, int(extent**0.5) + 1):
        if extent % d == 0:
            vals.add(d)
            vals.add(extent // d)
    p = 2
    while p < extent:
        vals.add(p)
        p *= 2
    return sorted(vals)


def enumerate_tiles(
    w: Workload,
    input_buf_words: int,
    psum_buf_words: int,
    exhaustive: bool = False,
    per_buffer_words: int | None = None,
) -> list[TileScheme]:
    """All tile shapes whose footprints fit the buffers.

    ``input_buf_words`` bounds the sum of input footprints; each single
    tensor additionally fits its own physical buffer (half the total by
    default, matching two separate input buffers).
    """
    if input_buf_words <= 0 or psum_buf_words <= 0:
        raise ValueError("buffer capacities must be positive")
    if per_buffer_words is None:
        per_buffer_words = input_buf_words // 2 if len(w.inputs) > 1 else input_buf_words

    cands = [_axis_candidates(e, exhaustive) for e in w.ndrange.extents]

    def space_of():
        n = 1
        for c in cands:
            n *= len(c)
        return n

    # shrink oversized search spaces: first restrict the widest axes to
    # divisors, then thin lists by halves; both steps strictly shrink, so
    # this terminates
    filtered = [False] * len(cands)
    while space_of() > SEARCH_SPACE_CAP:
        order = sorted(range(len(cands)), key=lambda i: -len(cands[i]))
        target = next((i for i in order if not filtered[i]), None)
        if target is not None:
            e = w.ndrange.extents[target]
            filtered[target] = True
            cands[target] = sorted({c for c in cands[target] if e % c == 0 or c == e})
            continue
        widest = order[0]
        if len(cands[widest]) <= 3:
            break
        keep = set(cands[widest][::2]) | {1, cands[widest][-1]}
        cands[widest] = sorted(keep)

    out = []
    pc = w.parallel_count
    for extents in itertools.product(*cands):
        psum = 1
        for e in extents[:pc]:
            psum *= e
        if psum > psum_buf_words:
            continue
        fps = tile_footprints(w, extents)
        if sum(fps) > input_buf_words or any(f > per_buffer_words for f in fps):
            continue
        macs = 1
        for e in extents:
            macs *= e
        out.append(TileScheme(extents, fps, psum, Fraction(sum(fps), macs)))

    if not out:
        ones = tuple(1 for _ in w.ndrange.extents)
        raise InfeasibleTileError(
            f"{w.name}: single-point tile needs {sum(tile_footprints(w, ones))} "
            f"input words and 1 accumulator; buffers are {input_buf_words}/{psum_buf_words}"
        )
    return out


def select_tile(
    w: Workload,
    input_buf_words: int,
    psum_buf_words: int,
    exhaustive: bool = False,
    per_buffer_words: int | None = None,
) -> TileScheme:
    """The fitting tile with minimal bandwidth per MAC.

    Ties break toward more MACs per tile, then the lexicographically
    smallest extent vector, so the choice is total-ordered.
    """
    tiles = enumerate_tiles(w, input_buf_words, psum_buf_words, exhaustive, per_buffer_words)
    return min(tiles, key=TileScheme.sort_key)


def ranked_tiles(
    w: Workload,
    input_buf_words: int,
    psum_buf_words: int,
    exhaustive: bool = False,
    per_buffer_words: int | None = None,
) -> list[TileScheme]:
    tiles = enumerate_tiles(w, input_buf_words, psum_buf_words, exhaustive, per_buffer_words)
    tiles.sort(key=TileScheme.sort_key)
    return tiles
