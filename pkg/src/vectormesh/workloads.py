"""Unified tensor-form workload descriptions and a brute-force functional oracle.

Every supported layer (matrix multiply, convolution variants, spatial
correlation) is expressed as one reduction over a rectangular iteration
domain: the leading indices of the domain are *parallel* (they define
output elements), the trailing indices are *temporal* (they are summed),
and each input tensor is addressed through an affine map of the domain
point.  Keeping a single form lets the tiler, the sharing planner, and
all three machine models treat workloads uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "NDRange",
    "IndexMap",
    "TensorSpec",
    "Workload",
    "GeometryError",
    "make_gemm",
    "make_conv",
    "make_depthwise",
    "make_correlation",
    "eval_reference",
]

# Guard against absurd configurations rather than silent overflow.
MAX_POINTS = 1 << 44


class GeometryError(ValueError):
    """Raised for invalid or inconsistent workload geometry."""


@dataclass(frozen=True)
class NDRange:
    """A rectangular iteration domain; one extent per loop index."""

    extents: tuple[int, ...]

    def __post_init__(self):
        if not self.extents:
            raise GeometryError("iteration domain needs at least one index")
        if any(int(e) < 1 for e in self.extents):
            raise GeometryError(f"extents must be >= 1, got {self.extents}")
        if self.npoints > MAX_POINTS:
            raise GeometryError(f"domain of {self.extents} points is too large")

    @property
    def rank(self) -> int:
        return len(self.extents)

    @property
    def npoints(self) -> int:
        n = 1
        for e in self.extents:
            n *= int(e)
        return n


@dataclass(frozen=True)
class IndexMap:
    """Affine map from a domain point to a tensor coordinate.

    coordinate = matrix @ point + offset, all exact integers.
    ``matrix`` has one row per tensor dimension and one column per
    domain index.
    """

    matrix: tuple[tuple[int, ...], ...]
    offset: tuple[int, ...]

    def __post_init__(self):
        if len(self.matrix) != len(self.offset):
            raise GeometryError("matrix row count must match offset length")
        widths = {len(row) for row in self.matrix}
        if len(widths) > 1:
            raise GeometryError("ragged coefficient matrix")

    @property
    def out_rank(self) -> int:
        return len(self.matrix)

    @property
    def in_rank(self) -> int:
        return len(self.matrix[0]) if self.matrix else 0

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.asarray(self.matrix, dtype=np.int64).reshape(self.out_rank, self.in_rank),
            np.asarray(self.offset, dtype=np.int64),
        )

    def apply(self, point: tuple[int, ...]) -> tuple[int, ...]:
        mat, off = self.as_arrays()
        return tuple((mat @ np.asarray(point, dtype=np.int64) + off).tolist())

    def depends_on(self, index: int) -> bool:
        """True when any coordinate varies with the given domain index."""
        return any(row[index] != 0 for row in self.matrix)

    def coord_interval(self, dim: int, box: tuple[tuple[int, int], ...]) -> tuple[int, int]:
        """Inclusive [lo, hi] of tensor coordinate ``dim`` over a domain box.

        ``box`` holds per-index inclusive (lo, hi) ranges.  The map is
        affine, so the extremes are attained at box corners and can be
        read off the coefficient signs.
        """
        lo = hi = self.offset[dim]
        for c, (b_lo, b_hi) in zip(self.matrix[dim], box):
            if c >= 0:
                lo += c * b_lo
                hi += c * b_hi
            else:
                lo += c * b_hi
                hi += c * b_lo
        return lo, hi


@dataclass(frozen=True)
class TensorSpec:
    """One input tensor: its shape, how the domain addresses it, word width."""

    name: str
    shape: tuple[int, ...]
    index_map: IndexMap
    word_bytes: int = 2

    def __post_init__(self):
        if self.index_map.out_rank != len(self.shape):
            raise GeometryError(
                f"tensor {self.name}: map produces {self.index_map.out_rank} "
                f"coordinates for a rank-{len(self.shape)} tensor"
            )


@dataclass(frozen=True)
class Workload:
    """A single layer in unified reduction form.

    Indices ``[0, parallel_count)`` define output elements; the rest are
    summed.  ``meta`` carries constructor parameters (stride, dilation,
    kind tag) that schedulers and reports may consult.
    """

    name: str
    ndrange: NDRange
    parallel_count: int
    inputs: tuple[TensorSpec, ...]
    output_shape: tuple[int, ...]
    out_bytes: int = 4
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (1 <= self.parallel_count <= self.ndrange.rank):
            raise GeometryError("parallel_count out of range")
        if self.output_shape != tuple(self.ndrange.extents[: self.parallel_count]):
            raise GeometryError("output shape must equal the parallel extents")
        self.validate_bounds()

    @property
    def parallel_extents(self) -> tuple[int, ...]:
        return self.ndrange.extents[: self.parallel_count]

    @property
    def temporal_extents(self) -> tuple[int, ...]:
        return self.ndrange.extents[self.parallel_count :]

    @property
    def macs(self) -> int:
        """One multiply-accumulate per domain point."""
        return self.ndrange.npoints

    @property
    def output_elems(self) -> int:
        n = 1
        for e in self.output_shape:
            n *= e
        return n

    def input_bytes(self) -> int:
        total = 0
        for t in self.inputs:
            n = 1
            for s in t.shape:
                n *= s
            total += n * t.word_bytes
        return total

    def unique_bytes(self) -> int:
        """Total input plus output footprint, each counted once."""
        return self.input_bytes() + self.output_elems * self.out_bytes

    def full_box(self) -> tuple[tuple[int, int], ...]:
        return tuple((0, e - 1) for e in self.ndrange.extents)

    def validate_bounds(self) -> None:
        """Every map must stay inside its tensor over the whole domain."""
        box = self.full_box()
        for t in self.inputs:
            for dim, size in enumerate(t.shape):
                lo, hi = t.index_map.coord_interval(dim, box)
                if lo < 0 or hi >= size:
                    raise GeometryError(
                        f"{self.name}: tensor {t.name} dim {dim} spans "
                        f"[{lo}, {hi}] outside [0, {size - 1}]"
                    )


def make_gemm(m: int, n: int, k: int, name: str | None = None, word_bytes: int = 2) -> Workload:
    """Matrix multiply C[i, j] = sum_k A[i, k] * B[k, j] over domain (m, n, k)."""
    if min(m, n, k) < 1:
        raise GeometryError("matrix dimensions must be positive")
    a = TensorSpec("A", (m, k), IndexMap(((1, 0, 0), (0, 0, 1)), (0, 0)), word_bytes)
    b = TensorSpec("B", (k, n), IndexMap(((0, 0, 1), (0, 1, 0)), (0, 0)), word_bytes)
    return Workload(
        name=name or f"gemm_{m}x{n}x{k}",
        ndrange=NDRange((m, n, k)),
        parallel_count=2,
        inputs=(a, b),
        output_shape=(m, n),
        meta={"kind": "gemm", "m": m, "n": n, "k": k},
    )


def conv_out_extent(i: int, k: int, stride: int, dilation: int) -> int:
    """Number of valid kernel placements along one axis, no padding."""
    span = dilation * (k - 1) + 1
    return (i - span) // stride + 1


def make_conv(
    c_i: int,
    c_o: int,
    i_w: int,
    i_h: int,
    k_w: int,
    k_h: int,
    stride: int = 1,
    dilation: int = 1,
    name: str | None = None,
    word_bytes: int = 2,
) -> Workload:
    """Convolution layer over domain (c_o, o_w, o_h, c_i, k_w, k_h).

    Output pixel (j, k) of filter i sums input[l, stride*j + dilation*m,
    stride*k + dilation*n] * kernel[i, l, m, n].
    """
    if min(c_i, c_o, i_w, i_h, k_w, k_h, stride, dilation) < 1:
        raise GeometryError("convolution parameters must be positive")
    o_w = conv_out_extent(i_w, k_w, stride, dilation)
    o_h = conv_out_extent(i_h, k_h, stride, dilation)
    if o_w < 1 or o_h < 1:
        raise GeometryError(
            f"kernel {k_w}x{k_h} stride {stride} dilation {dilation} "
            f"does not fit input {i_w}x{i_h}"
        )
    # domain order: (i=c_o, j=o_w, k=o_h, l=c_i, m=k_w, n=k_h)
    fmap = TensorSpec(
        "I",
        (c_i, i_w, i_h),
        IndexMap(
            (
                (0, 0, 0, 1, 0, 0),
                (0, stride, 0, 0, dilation, 0),
                (0, 0, stride, 0, 0, dilation),
            ),
            (0, 0, 0),
        ),
        word_bytes,
    )
    kern = TensorSpec(
        "K",
        (c_o, c_i, k_w, k_h),
        IndexMap(
            (
                (1, 0, 0, 0, 0, 0),
                (0, 0, 0, 1, 0, 0),
                (0, 0, 0, 0, 1, 0),
                (0, 0, 0, 0, 0, 1),
            ),
            (0, 0, 0, 0),
        ),
        word_bytes,
    )
    return Workload(
        name=name or f"conv_{c_i}to{c_o}_{i_w}x{i_h}_k{k_w}x{k_h}s{stride}d{dilation}",
        ndrange=NDRange((c_o, o_w, o_h, c_i, k_w, k_h)),
        parallel_count=3,
        inputs=(fmap, kern),
        output_shape=(c_o, o_w, o_h),
        meta={
            "kind": "conv",
            "c_i": c_i,
            "c_o": c_o,
            "i_w": i_w,
            "i_h": i_h,
            "k_w": k_w,
            "k_h": k_h,
            "stride": stride,
            "dilation": dilation,
        },
    )


def make_depthwise(
    channels: int,
    i_w: int,
    i_h: int,
    k_w: int,
    k_h: int,
    stride: int = 1,
    dilation: int = 1,
    name: str | None = None,
    word_bytes: int = 2,
) -> Workload:
    """Depthwise convolution: one group per channel, folded into the
    parallel channel index so the form stays identical to make_conv with
    a singleton reduction channel."""
    w = make_conv(1, channels, i_w, i_h, k_w, k_h, stride, dilation, name="tmp", word_bytes=word_bytes)
    o_w, o_h = w.output_shape[1], w.output_shape[2]
    fmap = TensorSpec(
        "I",
        (channels, i_w, i_h),
        IndexMap(
            (
                (1, 0, 0, 0, 0, 0),
                (0, stride, 0, 0, dilation, 0),
                (0, 0, stride, 0, 0, dilation),
            ),
            (0, 0, 0),
        ),
        word_bytes,
    )
    kern = TensorSpec(
        "K",
        (channels, 1, k_w, k_h),
        IndexMap(
            (
                (1, 0, 0, 0, 0, 0),
                (0, 0, 0, 1, 0, 0),
                (0, 0, 0, 0, 1, 0),
                (0, 0, 0, 0, 0, 1),
            ),
            (0, 0, 0, 0),
        ),
        word_bytes,
    )
    return Workload(
        name=name or f"dwconv_{channels}_{i_w}x{i_h}_k{k_w}x{k_h}s{stride}d{dilation}",
        ndrange=NDRange((channels, o_w, o_h, 1, k_w, k_h)),
        parallel_count=3,
        inputs=(fmap, kern),
        output_shape=(channels, o_w, o_h),
        meta={
            "kind": "depthwise",
            "c_i": channels,
            "c_o": channels,
            "i_w": i_w,
            "i_h": i_h,
            "k_w": k_w,
            "k_h": k_h,
            "stride": stride,
            "dilation": dilation,
        },
    )


def make_correlation(
    c_i: int,
    o_w: int,
    o_h: int,
    s_w: int,
    s_h: int,
    name: str | None = None,
    word_bytes: int = 2,
) -> Workload:
    """Spatial correlation of two feature maps over a displacement window.

    out[i, j, k, l] = sum_m cur[m, k, l] * ref[m, k + i, l + j] where
    (i, j) sweep the s_w x s_h displacement window and (k, l) sweep output
    pixels.  The reference map is supplied pre-padded to
    (c_i, o_w + s_w - 1, o_h + s_h - 1) so every displaced read is
    defined; zero padding is the catalog convention.
    """
    if min(c_i, o_w, o_h, s_w, s_h) < 1:
        raise GeometryError("correlation parameters must be positive")
    # domain order: (i=s_w, j=s_h, k=o_w, l=o_h, m=c_i)
    cur = TensorSpec(
        "I1",
        (c_i, o_w, o_h),
        IndexMap(
            (
                (0, 0, 0, 0, 1),
                (0, 0, 1, 0, 0),
                (0, 0, 0, 1, 0),
            ),
            (0, 0, 0),
        ),
        word_bytes,
    )
    ref = TensorSpec(
        "I2",
        (c_i, o_w + s_w - 1, o_h + s_h - 1),
        IndexMap(
            (
                (0, 0, 0, 0, 1),
                (1, 0, 1, 0, 0),
                (0, 1, 0, 1, 0),
            ),
            (0, 0, 0),
        ),
        word_bytes,
    )
    return Workload(
        name=name or f"corr_{c_i}_{o_w}x{o_h}_s{s_w}x{s_h}",
        ndrange=NDRange((s_w, s_h, o_w, o_h, c_i)),
        parallel_count=4,
        inputs=(cur, ref),
        output_shape=(s_w, s_h, o_w, o_h),
        meta={
            "kind": "correlation",
            "c_i": c_i,
            "o_w": o_w,
            "o_h": o_h,
            "s_w": s_w,
            "s_h": s_h,
            "padding": "zero",
        },
    )


def _flat_gather_parts(t: TensorSpec, w: Workload):
    """Split the flattened tensor address into a parallel-only part and a
    per-temporal-step scalar, exploiting affinity:

        flat(p, s) = strides . (M_par @ p) + strides . (M_tmp @ s + off)

    The first term is one array over the whole parallel face, computed
    once; each temporal step then costs a scalar add and a gather.
    """
    mat, off = t.index_map.as_arrays()
    strides = np.ones(len(t.shape), dtype=np.int64)
    for d in range(len(t.shape) - 2, -1, -1):
        strides[d] = strides[d + 1] * t.shape[d + 1]
    pc = w.parallel_count
    flat_coef = strides @ mat  # one coefficient per domain index
    par_grids = np.meshgrid(
        *[np.arange(e, dtype=np.int64) for e in w.parallel_extents], indexing="ij"
    )
    par_part = np.zeros(w.parallel_extents, dtype=np.int64)
    for d in range(pc):
        par_part += flat_coef[d] * par_grids[d]
    tmp_coef = flat_coef[pc:]
    base = int(strides @ off)
    return par_part.reshape(-1), tmp_coef, base


def eval_reference(w: Workload, tensors: dict[str, np.ndarray] | list[np.ndarray]) -> np.ndarray:
    """Exact integer reference: loop the temporal lattice, gather through
    the affine maps, accumulate over the full parallel face.

    This is the oracle every machine model is checked against bit for bit.
    """
    if isinstance(tensors, dict):
        arrays = [tensors[t.name] for t in w.inputs]
    else:
        arrays = list(tensors)
    if len(arrays) != len(w.inputs):
        raise ValueError(f"expected {len(w.inputs)} input tensors, got {len(arrays)}")
    flat_inputs = []
    gathers = []
    for t, arr in zip(w.inputs, arrays):
        arr = np.asarray(arr)
        if arr.shape != t.shape:
            raise ValueError(f"tensor {t.name}: shape {arr.shape} != declared {t.shape}")
        flat_inputs.append(arr.reshape(-1).astype(np.int64, copy=False))
        gathers.append(_flat_gather_parts(t, w))

    acc = np.zeros(w.output_elems, dtype=np.int64)
    prod = np.empty_like(acc)
    for step in np.ndindex(*w.temporal_extents):
        s = np.asarray(step, dtype=np.int64)
        first = True
        for (par_part, tmp_coef, base), flat in zip(gathers, flat_inputs):
            idx = par_part + (int(tmp_coef @ s) + base)
            vals = flat[idx]
            if first:
                np.copyto(prod, vals)
                first = False
            else:
                prod *= vals
        acc += prod
    return acc.reshape(w.output_shape)


def random_inputs(w: Workload, seed: int, lo: int = -4, hi: int = 4) -> dict[str, np.ndarray]:
    """Deterministic small-integer inputs for a workload.

    Correlation reference maps get their padding ring zeroed so padded
    and unpadded views describe the same signal.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for t in w.inputs:
        arr = rng.integers(lo, hi + 1, size=t.shape).astype(np.int64)
        out[t.name] = arr
    if w.meta.get("kind") == "correlation":
        ref = np.zeros(w.inputs[1].shape, dtype=np.int64)
        c, pw, ph = w.inputs[1].shape
        o_w, o_h = w.meta["o_w"], w.meta["o_h"]
        inner = rng.integers(lo, hi + 1, size=(c, o_w, o_h))
        ref[:, :o_w, :o_h] = inner
        out["I2"] = ref
    return out


def bandwidth_fraction(num: int, den: int) -> Fraction:
    return Fraction(num, den)
