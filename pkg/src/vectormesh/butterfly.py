"""Banked-buffer access model and butterfly switch network.

A TEU input buffer is split into 2^X single-word banks (X=5: 32 banks).
The PE group issues one address per lane each cycle; the butterfly serves
all 32 reads in a single cycle when the bank pattern is a permutation, or
when lanes holding equal addresses form uniform power-of-two multicast
groups whose representative banks are distinct.

Address patterns of the form

    addr(lane) = base + sum_i 2^i * o_i * bit_i(lane),   o_i odd,

always satisfy the permutation condition (the per-bit weights are
invertible mod 2^X), and the lowering stage arranges buffer layouts so
every issued pattern has this shape, with zero weights standing in for
multicast bits.  ``route`` actually drives a log2-stage switch simulation
and verifies the delivery, so the guarantee is checked, not assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "BankAccess",
    "ConflictCheck",
    "RoutingError",
    "check_conflict_free",
    "odd_stride_addresses",
    "route",
    "BankLayout",
    "LayoutError",
    "build_layout",
    "layout_pad_shuffle",
]


class RoutingError(RuntimeError):
    """A switch stage cannot serve two different words on one output."""


class LayoutError(RuntimeError):
    """No buffer layout makes the access family conflict-free."""


@dataclass(frozen=True)
class BankAccess:
    """One cycle's worth of per-lane word addresses."""

    addresses: tuple[int, ...]
    bank_bits: int = 5

    def __post_init__(self):
        if len(self.addresses) != 1 << self.bank_bits:
            raise ValueError(
                f"need {1 << self.bank_bits} addresses, got {len(self.addresses)}"
            )
        if any(a < 0 for a in self.addresses):
            raise ValueError("negative address")

    @property
    def lanes(self) -> int:
        return 1 << self.bank_bits

    def banks(self) -> tuple[int, ...]:
        mask = self.lanes - 1
        return tuple(a & mask for a in self.addresses)


@dataclass(frozen=True)
class ConflictCheck:
    ok: bool
    mode: str  # "permutation" | "broadcast" | "conflict"
    # bank -> lane tuple served from that bank (empty on conflict)
    assignment: tuple[tuple[int, ...], ...]


def check_conflict_free(access: BankAccess) -> ConflictCheck:
    """Single-cycle service test for one access vector.

    True when the lane banks are a permutation of 0..2^X-1, or when equal
    addresses partition the lanes into same-size power-of-two groups whose
    group banks are all distinct.
    """
    n = access.lanes
    banks = access.banks()
    assignment: list[list[int]] = [[] for _ in range(n)]

    if len(set(banks)) == n:
        for lane, b in enumerate(banks):
            assignment[b].append(lane)
        return ConflictCheck(True, "permutation", tuple(tuple(v) for v in assignment))

    groups: dict[int, list[int]] = {}
    for lane, a in enumerate(access.addresses):
        groups.setdefault(a, []).append(lane)
    group_banks = [a & (n - 1) for a in groups]
    size = len(next(iter(groups.values())))
    uniform_pow2 = all(len(v) == size for v in groups.values()) and (size & (size - 1)) == 0
    if uniform_pow2 and len(set(group_banks)) == len(group_banks):
        for a, lanes in groups.items():
            assignment[a & (n - 1)] = list(lanes)
        return ConflictCheck(True, "broadcast", tuple(tuple(v) for v in assignment))

    return ConflictCheck(False, "conflict", tuple(() for _ in range(n)))


def odd_stride_addresses(base: int, coeffs: tuple[int, ...], bank_bits: int) -> BankAccess:
    """Generate the 2^X addresses  base + sum_i 2^i * o_i * bit_i(lane).

    Every coefficient must be odd; the resulting access is always
    conflict-free (each weight 2^i * o_i contributes an invertible digit).
    """
    if len(coeffs) != bank_bits:
        raise ValueError(f"need {bank_bits} coefficients, got {len(coeffs)}")
    if any(o % 2 == 0 for o in coeffs):
        raise ValueError(f"coefficients must all be odd, got {coeffs}")
    n = 1 << bank_bits
    addrs = []
    for lane in range(n):
        a = base
        for i in range(bank_bits):
            if (lane >> i) & 1:
                a += (1 << i) * coeffs[i]
        addrs.append(a)
    return BankAccess(tuple(addrs), bank_bits)


@dataclass(frozen=True)
class ButterflyRoute:
    """Resolved switch program: per stage, per node, the source node the
    output at that position reads from (None for dead outputs)."""

    stages: tuple[tuple[int | None, ...], ...]
    delivered: tuple[int, ...]  # address delivered to each lane


def route(access: BankAccess) -> ButterflyRoute:
    """Drive a log2(lanes)-stage butterfly from bank ports to lane ports.

    Words start at their bank's port.  Stage s (processed from the top
    bit down) pairs ports differing in bit s; each 2x2 switch passes,
    crosses, or duplicates.  Raises RoutingError if two different words
    ever need the same switch output, and verifies delivery lane by lane.
    """
    n = access.lanes
    bits = access.bank_bits
    # occupancy[node] = address whose word currently sits at this port
    occ: list[int | None] = [None] * n
    dests: dict[int, list[int]] = {}
    for lane, a in enumerate(access.addresses):
        dests.setdefault(a, []).append(lane)
    for a, lanes in dests.items():
        b = a & (n - 1)
        if occ[b] is not None and occ[b] != a:
            raise RoutingError(f"bank {b} holds two requested words")
        occ[b] = a

    stages: list[tuple[int | None, ...]] = []
    for s in range(bits - 1, -1, -1):
        bit = 1 << s
        nxt: list[int | None] = [None] * n
        src: list[int | None] = [None] * n
        for lo in range(n):
            if lo & bit:
                continue
            hi = lo | bit
            for node in (lo, hi):
                a = occ[node]
                if a is None:
                    continue
                for d in dests[a]:
                    # a destination routes through this node iff the bits
                    # already fixed by earlier stages agree; bit s then
                    # selects the upper or lower switch output
                    if (d >> (s + 1)) != (node >> (s + 1)):
                        continue
                    out = hi if d & bit else lo
                    if nxt[out] is not None and nxt[out] != a:
                        raise RoutingError(
                            f"stage bit {s}: output {out} needed by two words"
                        )
                    nxt[out] = a
                    src[out] = node
        occ = nxt
        stages.append(tuple(src))

    delivered = []
    for lane in range(n):
        if occ[lane] != access.addresses[lane]:
            raise RoutingError(f"lane {lane} got {occ[lane]}, wanted {access.addresses[lane]}")
        delivered.append(occ[lane])
    return ButterflyRoute(tuple(stages), tuple(delivered))


# ---------------------------------------------------------------------------
# Buffer layouts: padding and phase-shuffled placement


@dataclass(frozen=True)
class DimLayout:
    """Storage of one tensor dimension of a fetched tile box.

    A logical in-box delta splits as  delta = q * step + r: the stride
    phase r is a slow-moving plane (temporal shifts only), and q moves by
    one per lane increment at pitch ``pitch_q``.  The dim's total span is
    padded so pitch_q stays (2^lane-bits-below * odd), which keeps every
    lane pattern in the serviceable class.
    """

    extent: int  # box extent in tensor coordinates
    step: int  # tensor-coordinate stride of one lane increment
    lane_span: int  # lanes walking this dim (1 = none)
    pitch_q: int
    n_q: int  # lane-step positions stored per phase plane

    def locate(self, delta: int) -> int:
        q, r = divmod(delta, self.step)
        return r * (self.n_q * self.pitch_q) + q * self.pitch_q


@dataclass(frozen=True)
class BankLayout:
    """Physical placement of one tensor's tile box in a banked buffer."""

    dims: tuple[DimLayout, ...]
    words: int  # padded storage size
    data_words: int  # unpadded box volume
    bank_bits: int = 5

    @property
    def padding_words(self) -> int:
        return self.words - self.data_words

    def address(self, deltas: tuple[int, ...]) -> int:
        a = 0
        for dim, d in zip(self.dims, deltas):
            a += dim.locate(d)
        return a

    def lane_pitch(self, dim_index: int) -> int:
        """Address increment for one lane step along a dimension."""
        return self.dims[dim_index].pitch_q


def _pad_odd(e: int) -> int:
    return e if e % 2 else e + 1


def build_layout(
    box_extents: tuple[int, ...],
    lane_spans: tuple[int, ...],
    steps: tuple[int, ...],
    bank_bits: int = 5,
) -> BankLayout:
    """Construct a padded, phase-shuffled layout for a tile box.

    Dimensions are stored outermost-first in the given order.  For each
    dim: the step phase r is innermost (shuffling strided windows into
    dense runs), then the lane phase, then blocks.  Extents below any
    lane level are padded to odd so a lane increment lands 2^j * odd
    words apart, which keeps every issued pattern in the conflict-free
    class.  Lane spans of dims carrying lanes must be powers of two and
    dims are assumed ordered so inner dims take lower lane bits.
    """
    if not (len(box_extents) == len(lane_spans) == len(steps)):
        raise ValueError("dim descriptions must align")
    rank = len(box_extents)
    for e, span, step in zip(box_extents, lane_spans, steps):
        if span > 1 and span & (span - 1):
            raise LayoutError(f"lane span {span} is not a power of two")
        if e < 1 or step < 1:
            raise ValueError("extents and steps must be positive")
    data = 1
    for e in box_extents:
        data *= e
    lane_bits = tuple(s.bit_length() - 1 for s in lane_spans)

    def assemble(tight: bool) -> BankLayout:
        dims_rev = []
        pitch = 1
        for i in range(rank - 1, -1, -1):
            e, span, step = box_extents[i], lane_spans[i], steps[i]
            n_q = -(-e // step)
            dims_rev.append(DimLayout(e, step, span, pitch, n_q))
            raw = n_q * step  # slots this dim occupies at the current pitch
            lanes_above = any(s > 1 for s in lane_spans[:i])
            if tight or i == 0 or not lanes_above:
                mult = raw
            else:
                # keep pitch = 2^(lane bits so far) * odd for outer lanes
                bits = span.bit_length() - 1
                mult = (1 << bits) * _pad_odd(-(-raw // (1 << bits)))
            pitch *= mult
        return BankLayout(tuple(reversed(dims_rev)), pitch, data, bank_bits)

    # the dense packing often lands in the serviceable class already; the
    # padded form is the guaranteed fallback.  Bank behavior depends only
    # on the base address mod 2^X, so probing every residue proves the
    # whole pattern family.
    n_banks = 1 << bank_bits
    for tight in (True, False):
        layout = assemble(tight)
        ok = True
        for base in range(n_banks):
            probe = lane_pattern(layout, lane_bits, base=base)
            if not check_conflict_free(probe).ok:
                ok = False
                break
            try:
                route(probe)
            except RoutingError:
                ok = False
                break
        if ok:
            return layout
    raise LayoutError(
        f"no serviceable layout for box {box_extents} spans {lane_spans} steps {steps}"
    )


def lane_pattern(layout: BankLayout, lane_bits: tuple[int, ...], base: int = 0) -> BankAccess:
    """Materialize the per-lane offsets for one issue group.

    ``lane_bits`` lists, per layout dim, how many lane bits walk it,
    ordered like the layout dims; earlier dims take higher bits.
    """
    total_bits = sum(lane_bits)
    n = 1 << layout.bank_bits
    if (1 << total_bits) > n:
        raise ValueError("more lane bits than lanes")
    addrs = []
    for lane in range(n):
        idx = lane
        a = base
        # low bits belong to the innermost laned dim
        for dim, bits in zip(reversed(layout.dims), reversed(lane_bits)):
            if bits == 0:
                continue
            sub = idx & ((1 << bits) - 1)
            idx >>= bits
            a += sub * dim.pitch_q
        addrs.append(a)
    return BankAccess(tuple(addrs), layout.bank_bits)


_FAMILIES = ("matrix-row", "broadcast", "strided-window", "shifted-window")


def layout_pad_shuffle(
    tile_shape: tuple[int, ...],
    family: str,
    bank_bits: int = 5,
    lane_spans: tuple[int, ...] | None = None,
    steps: tuple[int, ...] | None = None,
) -> BankLayout:
    """Lay out a tile tensor for one of the lowered access families.

    matrix-row: unit-stride row fetches, lanes on the innermost dim.
    broadcast: all lanes read one word; no lane dims at all.
    strided-window / shifted-window: window fetches with the given
    per-dim steps (conv stride, or 1 for correlation shifts).
    """
    if family not in _FAMILIES:
        raise LayoutError(f"unknown access family {family!r}")
    rank = len(tile_shape)
    if steps is None:
        steps = (1,) * rank
    if lane_spans is None:
        if family == "broadcast":
            lane_spans = (1,) * rank
        else:
            span = min(1 << bank_bits, 1 << (tile_shape[-1] - 1).bit_length())
            lane_spans = (1,) * (rank - 1) + (span,)
    layout = build_layout(tile_shape, lane_spans, steps, bank_bits)
    # the layout is only acceptable if its own issue pattern checks out
    bits = tuple(s.bit_length() - 1 for s in lane_spans)
    probe = lane_pattern(layout, bits)
    chk = check_conflict_free(probe)
    if not chk.ok:
        raise LayoutError(f"family {family!r} not serviceable under layout")
    route(probe)
    return layout
