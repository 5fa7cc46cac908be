"""Calibrated models of two reference dataflows under the shared resource
budget: a weight-stationary systolic array and a row-stationary array.

These are abstractions, not RTL twins: the dataflow, buffer allocation,
bubble accounting, and traffic formulas follow the published descriptions,
while unspecified microarchitecture (NoC arbitration, controller details)
is simplified.  Outputs are computed along each model's own accumulation
path in exact integers, so the functional-oracle comparison stays
meaningful; timing is a pipelined bound of compute cycles against the
global-buffer and DRAM byte budgets per cycle.

Spatial matching (correlation) and dilated kernels are rejected: those
datapaths are whole the point of the mesh machine.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .machine import STALL_KEYS, ConfigError, SimResult
from .workloads import Workload

__all__ = [
    "BaselineConfig",
    "UnsupportedWorkloadError",
    "make_baseline",
    "run_systolic",
    "run_eyeriss",
    "run_baseline",
]


class UnsupportedWorkloadError(ValueError):
    """Workload shape this dataflow has no mapping for."""


@dataclass(frozen=True)
class BaselineConfig:
    kind: str  # "systolic" | "row-stationary"
    pe_rows: int
    pe_cols: int
    local_buf_bytes_per_pe: int
    glb_bytes: int
    clock_hz: float = 2.0e8
    dram_bytes_per_sec: float = 6.4e9
    glb_bytes_per_sec: float = 2.56e10
    dram_latency_cycles: int = 100
    word_bytes: int = 2
    psum_bytes: int = 4

    def __post_init__(self):
        if self.kind not in ("systolic", "row-stationary"):
            raise ConfigError(f"unknown baseline kind {self.kind!r}")
        if self.pe_rows < 1 or self.pe_cols < 1:
            raise ConfigError("PE array must be at least 1x1")
        if self.kind == "systolic" and self.local_buf_bytes_per_pe != 0:
            raise ConfigError("systolic PEs hold no local tile buffer")
        if self.kind == "row-stationary" and self.local_buf_bytes_per_pe <= 0:
            raise ConfigError("row-stationary PEs need a local tile buffer")
        if self.glb_bytes <= 0:
            raise ConfigError("glb_bytes must be positive")

    @property
    def n_pes(self) -> int:
        return self.pe_rows * self.pe_cols

    @property
    def dram_bytes_per_cycle(self) -> int:
        return max(1, int(self.dram_bytes_per_sec // self.clock_hz))

    @property
    def glb_bytes_per_cycle(self) -> int:
        return max(1, int(self.glb_bytes_per_sec // self.clock_hz))

    def to_dict(self) -> dict:
        return asdict(self)


# array shapes and per-PE memory follow the shared evaluation budget:
# no local buffer and 1.0 KB/PE of global buffer for the systolic array,
# 0.3 KB local and 0.5 KB/PE global for row-stationary
_SHAPES = {128: (8, 16), 512: (16, 32)}


def make_baseline(kind: str, n_pes: int) -> BaselineConfig:
    if n_pes not in _SHAPES:
        raise ConfigError(f"no standard shape for {n_pes} PEs (use 128 or 512)")
    r, c = _SHAPES[n_pes]
    if kind == "systolic":
        return BaselineConfig(kind, r, c, 0, glb_bytes=1024 * n_pes)
    if kind == "row-stationary":
        return BaselineConfig(kind, r, c, 307, glb_bytes=512 * n_pes)
    raise ConfigError(f"unknown baseline kind {kind!r}")


def _require_matrixizable(w: Workload, kind: str):
    meta = w.meta
    wk = meta.get("kind", "")
    if wk == "correlation":
        raise UnsupportedWorkloadError(
            f"{w.name}: spatial matching has no {kind} dataflow mapping"
        )
    if wk in ("conv", "depthwise") and meta.get("dilation", 1) != 1:
        raise UnsupportedWorkloadError(
            f"{w.name}: dilated kernels are not mapped on the {kind} model"
        )
    if wk not in ("gemm", "conv", "depthwise"):
        raise UnsupportedWorkloadError(f"{w.name}: unknown workload kind {wk!r}")


def _gemm_view(w: Workload):
    """Problem dimensions of the matrix form: (groups, M, N, K).

    conv lowers via virtual patch matrices (im2col addressing, nothing
    materialized in DRAM); depthwise becomes one tiny matrix per channel.
    """
    meta = w.meta
    if meta["kind"] == "gemm":
        return 1, meta["m"], meta["n"], meta["k"]
    c_o, o_w, o_h = w.output_shape
    if meta["kind"] == "conv":
        return 1, o_w * o_h, c_o, meta["c_i"] * meta["k_w"] * meta["k_h"]
    # depthwise: per-channel groups
    return c_o, o_w * o_h, 1, meta["k_w"] * meta["k_h"]


def _patch_indices(w: Workload, m0: int, m_t: int, k0: int, k_t: int, group: int):
    """Flat input indices of the virtual patch block [m0:m0+m_t, k0:k0+k_t]."""
    meta = w.meta
    stride = meta["stride"]
    _, o_w, o_h = w.output_shape
    fm = w.inputs[0]
    c_i, i_w, i_h = fm.shape
    m = np.arange(m0, m0 + m_t)
    ow, oh = m // o_h, m % o_h
    k = np.arange(k0, k0 + k_t)
    if meta["kind"] == "depthwise":
        kw, kh = k // meta["k_h"], k % meta["k_h"]
        ci = np.full_like(k, group)
    else:
        ci = k // (meta["k_w"] * meta["k_h"])
        rem = k % (meta["k_w"] * meta["k_h"])
        kw, kh = rem // meta["k_h"], rem % meta["k_h"]
    x = ow[:, None] * stride + kw[None, :]
    y = oh[:, None] * stride + kh[None, :]
    return ci[None, :] * (i_w * i_h) + x * i_h + y


def _finish(cfg, w, compute_cycles, macs, glb_r, glb_w, dram_r, dram_w, out, extras):
    glb_cycles = -(-(glb_r + glb_w) // cfg.glb_bytes_per_cycle)
    dram_cycles = -(-(dram_r + dram_w) // cfg.dram_bytes_per_cycle)
    cycles = max(compute_cycles, glb_cycles, dram_cycles) + cfg.dram_latency_cycles
    stalls = {k: 0 for k in STALL_KEYS}
    stalls["glb"] = max(0, glb_cycles - compute_cycles)
    stalls["dram"] = max(0, dram_cycles - max(compute_cycles, glb_cycles))
    bubbles = compute_cycles * cfg.n_pes - macs
    stalls["tile_bubble"] = bubbles // cfg.n_pes
    if macs != w.macs:
        raise AssertionError(f"{w.name}: mapping covered {macs} of {w.macs} MACs")
    util = macs / (cycles * cfg.n_pes) if cycles else 0.0
    extras = dict(extras)
    extras["compute_cycles"] = compute_cycles
    extras["n_pes"] = cfg.n_pes
    return SimResult(
        cycles=cycles,
        macs=macs,
        glb_read_bytes=glb_r,
        glb_write_bytes=glb_w,
        dram_read_bytes=dram_r,
        dram_write_bytes=dram_w,
        fifo_words_transferred=0,
        stall_cycles=stalls,
        bubble_lane_cycles=bubbles,
        output=out,
        utilization=util,
        extras=extras,
    )


def run_systolic(cfg: BaselineConfig, w: Workload, inputs) -> SimResult:
    """Weight-stationary execution: one R x C operand block held in the
    array, the other operand streamed through it row by row.

    Each pass streams m_tile rows and pays the (R + C - 1) fill/drain
    skew; partial sums shuttle through global-buffer accumulators between
    reduction passes, and the streamed operand is re-gathered from DRAM
    whenever the buffer cannot hold it (it usually cannot: this floor
    plan spends its area on accumulators, not operand cache).
    """
    if cfg.kind != "systolic":
        raise ConfigError("config is not a systolic array")
    _require_matrixizable(w, "systolic")
    meta = w.meta
    groups, M, N, K = _gemm_view(w)
    R, C = cfg.pe_rows, cfg.pe_cols
    wb, pb = cfg.word_bytes, cfg.psum_bytes

    if isinstance(inputs, dict):
        arrays = [np.asarray(inputs[t.name]).astype(np.int64) for t in w.inputs]
    else:
        arrays = [np.asarray(a).astype(np.int64) for a in inputs]
    a_arr, b_arr = arrays[0], arrays[1]

    # buffer split: 40% accumulators, 30% stationary-panel cache, rest
    # stream buffers; the streamed operand panel caches only if it fits
    m_tile = max(1, min(M, (4 * cfg.glb_bytes // 10) // max(1, C * pb)))
    w_panel_bytes = K * min(C, N) * wb
    w_cached = w_panel_bytes <= 3 * cfg.glb_bytes // 10
    a_total_bytes = w.inputs[0].shape[0] * w.inputs[0].shape[1] * wb if meta["kind"] == "gemm" else None
    if meta["kind"] == "gemm":
        a_stream_cached = a_total_bytes <= 3 * cfg.glb_bytes // 10
    else:
        fm = w.inputs[0].shape
        a_stream_cached = fm[0] * fm[1] * fm[2] * wb <= 3 * cfg.glb_bytes // 10

    out = np.zeros(w.output_shape, dtype=np.int64)
    out2d = out.reshape(w.output_shape[0], -1) if meta["kind"] != "gemm" else out

    compute = 0
    macs = 0
    glb_r = glb_w = dram_r = dram_w = 0
    passes = 0
    skew = R + C - 1

    for g in range(groups):
        if meta["kind"] == "gemm":
            a_mat = a_arr  # (M, K)
            w_mat = b_arr  # (K, N)
        elif meta["kind"] == "conv":
            w_mat = b_arr.reshape(w.output_shape[0], -1).T  # (K, N=C_o)
        else:  # depthwise: kernel (C, 1, kw, kh) -> (K, 1)
            w_mat = b_arr[g].reshape(-1, 1)
        for n0 in range(0, N, C):
            n_t = min(C, N - n0)
            if w_cached:
                dram_r += K * n_t * wb  # panel pulled in once per n block
            for m0 in range(0, M, m_tile):
                m_t = min(m_tile, M - m0)
                acc = np.zeros((m_t, n_t), dtype=np.int64)
                n_kblk = -(-K // R)
                for ki, k0 in enumerate(range(0, K, R)):
                    k_t = min(R, K - k0)
                    if meta["kind"] == "gemm":
                        a_strip = a_mat[m0 : m0 + m_t, k0 : k0 + k_t]
                    else:
                        idx = _patch_indices(w, m0, m_t, k0, k_t, g)
                        a_strip = a_arr.reshape(-1)[idx]
                    acc += a_strip @ w_mat[k0 : k0 + k_t, n0 : n0 + n_t]
                    passes += 1
                    compute += m_t + skew
                    macs += m_t * k_t * n_t
                    # streamed operand and stationary fill, through the GLB
                    a_bytes = m_t * k_t * wb
                    w_bytes = k_t * n_t * wb
                    glb_r += a_bytes + w_bytes
                    if not a_stream_cached:
                        dram_r += a_bytes
                    if not w_cached:
                        dram_r += w_bytes
                    # partial sums shuttle to the accumulators every pass
                    glb_w += m_t * n_t * pb
                    if ki > 0:
                        glb_r += m_t * n_t * pb
                # drain finished outputs
                glb_r += m_t * n_t * pb
                dram_w += m_t * n_t * pb
                if meta["kind"] == "gemm":
                    out2d[m0 : m0 + m_t, n0 : n0 + n_t] = acc
                elif meta["kind"] == "conv":
                    out2d[n0 : n0 + n_t, m0 : m0 + m_t] = acc.T
                else:
                    out2d[g, m0 : m0 + m_t] = acc[:, 0]
    if a_stream_cached:
        # streamed operand was pulled into the buffer once up front
        dram_r += (a_total_bytes if meta["kind"] == "gemm"
                   else w.inputs[0].shape[0] * w.inputs[0].shape[1] * w.inputs[0].shape[2] * wb)

    extras = {
        "arch": "systolic",
        "array": f"{R}x{C}",
        "passes": passes,
        "m_tile": m_tile,
        "weights_cached": w_cached,
        "stream_cached": a_stream_cached,
    }
    return _finish(cfg, w, compute, macs, glb_r, glb_w, dram_r, dram_w, out, extras)


def _rs_speeds(cfg: BaselineConfig, k_w: int):
    """Filters and channels held per PE, from the local buffer budget."""
    words = cfg.local_buf_bytes_per_pe // cfg.word_bytes
    ifmap_share = max(4, words // 8)
    filt_share = max(8, (words * 3) // 4)
    q = max(1, ifmap_share // max(1, k_w))
    p = max(1, filt_share // max(1, q * k_w))
    return p, q


def run_eyeriss(cfg: BaselineConfig, w: Workload, inputs) -> SimResult:
    """Row-stationary execution: kernel rows pinned to PE rows, input rows
    multicast diagonally, partial sums accumulated up each column.

    Each pass holds p filters x q channels per PE; leftover PE rows
    replicate across channel blocks.  Kernel heights beyond the array
    fold temporally with partial sums revisiting the global buffer.  A
    multicast word is one GLB read but lands in every spad of its
    diagonal, which is counted as local copy occupancy.
    """
    if cfg.kind != "row-stationary":
        raise ConfigError("config is not a row-stationary array")
    _require_matrixizable(w, "row-stationary")
    meta = dict(w.meta)
    if isinstance(inputs, dict):
        arrays = [np.asarray(inputs[t.name]).astype(np.int64) for t in w.inputs]
    else:
        arrays = [np.asarray(a).astype(np.int64) for a in inputs]

    if meta["kind"] == "gemm":
        # rows of A become 1x1 kernels over K channels; columns of B are
        # pixels, laid along the strip axis so the PE columns fill up
        m, n, k = meta["m"], meta["n"], meta["k"]
        fmap = arrays[1].reshape(k, 1, n)
        kern = arrays[0].reshape(m, k, 1, 1)
        c_o, o_w, o_h, c_i, k_w, k_h, stride = m, 1, n, k, 1, 1, 1
        out_shape = (m, 1, n)
    else:
        fmap, kern = arrays[0], arrays[1]
        c_o, o_w, o_h = w.output_shape
        k_w, k_h, stride = meta["k_w"], meta["k_h"], meta["stride"]
        c_i = 1 if meta["kind"] == "depthwise" else meta["c_i"]
        out_shape = w.output_shape

    R, C = cfg.pe_rows, cfg.pe_cols
    wb, pb = cfg.word_bytes, cfg.psum_bytes
    p, q = _rs_speeds(cfg, k_w)
    k_h_eff = min(k_h, R)
    folds = -(-k_h // R)
    rep = max(1, R // k_h_eff)
    groups = c_o if meta["kind"] == "depthwise" else 1
    cin = 1 if meta["kind"] == "depthwise" else c_i
    inflight = min(cin, q * rep)
    strip = min(C, o_h)

    i_w = fmap.shape[1]
    out = np.zeros(out_shape, dtype=np.int64)
    compute = 0
    macs = 0
    glb_r = glb_w = dram_r = dram_w = 0
    copy_words = 0
    passes = 0

    fm_bytes = fmap.size * wb
    w_bytes_total = kern.size * wb
    fm_cached = fm_bytes <= cfg.glb_bytes // 2
    w_cached = w_bytes_total <= (3 * cfg.glb_bytes) // 10

    for g in range(groups):
        gsl = slice(g, g + 1) if meta["kind"] == "depthwise" else slice(None)
        f_total = 1 if meta["kind"] == "depthwise" else c_o
        for f0 in range(0, f_total, p):
            p_eff = min(p, f_total - f0)
            for fold in range(folds):
                kh0 = fold * R
                kh_t = min(R, k_h - kh0)
                for c0 in range(0, cin, inflight):
                    c_t = min(inflight, cin - c0)
                    w_block_bytes = p_eff * c_t * k_w * kh_t * wb
                    glb_r += w_block_bytes
                    if not w_cached:
                        dram_r += w_block_bytes
                    for y0 in range(0, o_h, strip):
                        rows = min(strip, o_h - y0)
                        # input window feeding this strip, multicast once
                        win_y = (rows - 1) * stride + kh_t
                        win_bytes = c_t * i_w * win_y * wb
                        glb_r += win_bytes
                        if not fm_cached:
                            dram_r += win_bytes
                        copy_words += (win_bytes // wb) * kh_t
                        # partial sums revisit the buffer between passes
                        strip_bytes = p_eff * rows * o_w * pb
                        glb_w += strip_bytes
                        if fold > 0 or c0 > 0:
                            glb_r += strip_bytes
                        passes += 1
                        compute += o_w * k_w * min(q, c_t) * p_eff + R
                        macs += p_eff * c_t * kh_t * k_w * rows * o_w
                        # numeric accumulation along the same blocking
                        if meta["kind"] == "depthwise":
                            fsl = slice(g, g + 1)
                            csl = slice(0, 1)
                            ksl = kern[fsl, csl]
                            fm_blk = fmap[g : g + 1]
                        else:
                            fsl = slice(f0, f0 + p_eff)
                            ksl = kern[fsl, c0 : c0 + c_t]
                            fm_blk = fmap[c0 : c0 + c_t]
                        acc = out[fsl, :, y0 : y0 + rows] if meta["kind"] != "gemm" else out[fsl, :, y0 : y0 + rows]
                        for mm in range(k_w):
                            for nn in range(kh0, kh0 + kh_t):
                                patch = fm_blk[
                                    :,
                                    mm : mm + (o_w - 1) * stride + 1 : stride,
                                    y0 * stride + nn : y0 * stride + nn + (rows - 1) * stride + 1 : stride,
                                ]
                                acc += np.tensordot(ksl[:, :, mm, nn], patch, axes=(1, 0))
    # finished outputs drain once
    n_out_bytes = out.size * pb
    glb_r += n_out_bytes
    dram_w += n_out_bytes
    if fm_cached:
        dram_r += fm_bytes
    if w_cached:
        dram_r += w_bytes_total

    extras = {
        "arch": "row-stationary",
        "array": f"{R}x{C}",
        "passes": passes,
        "filters_per_pe": p,
        "channels_per_pe": q,
        "replication": rep,
        "local_copy_words": copy_words,
    }
    res = _finish(cfg, w, compute, macs, glb_r, glb_w, dram_r, dram_w,
                  out.reshape(w.output_shape), extras)
    return res


def run_baseline(cfg: BaselineConfig, w: Workload, inputs) -> SimResult:
    if cfg.kind == "systolic":
        return run_systolic(cfg, w, inputs)
    return run_eyeriss(cfg, w, inputs)
