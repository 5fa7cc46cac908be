import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vectormesh.tiling import (
    InfeasibleTileError,
    enumerate_tiles,
    make_scheme,
    select_tile,
    tile_footprints,
)
from vectormesh.workloads import make_conv, make_correlation, make_gemm


def test_gemm_footprints_and_psums():
    w = make_gemm(64, 64, 64)
    ts = make_scheme(w, (8, 16, 4))
    # operand tiles are t_i*t_k and t_j*t_k words over t_i*t_j accumulators
    assert ts.footprints == (8 * 4, 16 * 4)
    assert ts.psum_words == 8 * 16
    assert ts.macs == 8 * 16 * 4


def test_unit_tile_bandwidth():
    w = make_gemm(4, 4, 4)
    ts = make_scheme(w, (1, 1, 1))
    assert ts.bandwidth_per_mac == Fraction(2)


def test_conv_halo_footprint_matches_enumeration():
    # distinct coordinates touched by the tile box, counted brute force,
    # equal the bounding box when windows overlap (stride <= kernel span)
    w = make_conv(4, 6, 20, 20, 3, 3, stride=2)
    extents = (2, 3, 4, 2, 3, 3)
    fps = tile_footprints(w, extents)
    touched = set()
    for pt in itertools.product(*[range(e) for e in extents]):
        touched.add(w.inputs[0].index_map.apply(pt))
    lo = [min(c[d] for c in touched) for d in range(3)]
    hi = [max(c[d] for c in touched) for d in range(3)]
    bbox = 1
    for l, h in zip(lo, hi):
        bbox *= h - l + 1
    assert fps[0] == bbox == len(touched)
    # and the closed form: stride*(t_j-1) + dilation*(k_w-1) + 1 per axis
    assert fps[0] == 2 * (2 * 2 + 2 + 1) * (2 * 3 + 2 + 1)


def test_spec_ratio_example():
    w = make_gemm(64, 64, 64)
    ts = make_scheme(w, (32, 32, 16))
    assert ts.bandwidth_per_mac == Fraction(1, 16)


def test_square_tiles_win_for_square_gemm():
    w = make_gemm(64, 64, 64)
    ts = select_tile(w, 2048, 1024)
    assert ts.extents[0] == ts.extents[1]


def test_degenerate_reduction_axis():
    w = make_gemm(8, 8, 1)
    ts = select_tile(w, 64, 64)
    assert ts.extents[2] == 1


def test_infeasible_buffers():
    w = make_gemm(8, 8, 8)
    with pytest.raises(InfeasibleTileError):
        enumerate_tiles(w, 1, 1)


def brute_force_argmin(m, n, k, inbuf, psum):
    """Independent oracle: hand GEMM footprint formulas over every tile."""
    best = None
    per_buf = inbuf // 2
    for ti in range(1, m + 1):
        for tj in range(1, n + 1):
            for tk in range(1, k + 1):
                fa, fb = ti * tk, tj * tk
                if ti * tj > psum or fa + fb > inbuf or fa > per_buf or fb > per_buf:
                    continue
                bpm = Fraction(fa + fb, ti * tj * tk)
                key = (bpm, -(ti * tj * tk), (ti, tj, tk))
                if best is None or key < best:
                    best = key
    return best


@given(
    m=st.integers(1, 16), n=st.integers(1, 16), k=st.integers(1, 16),
    inbuf=st.sampled_from([32, 64, 128, 256]),
    psum=st.sampled_from([16, 64, 256]),
)
@settings(max_examples=60, deadline=None)
def test_select_tile_matches_brute_force(m, n, k, inbuf, psum):
    w = make_gemm(m, n, k)
    best = brute_force_argmin(m, n, k, inbuf, psum)
    if best is None:
        with pytest.raises(InfeasibleTileError):
            select_tile(w, inbuf, psum)
        return
    ts = select_tile(w, inbuf, psum)
    assert ts.bandwidth_per_mac == best[0]
    assert ts.extents == best[2]


@given(
    m=st.integers(1, 10), n=st.integers(1, 10), k=st.integers(1, 10),
    ti=st.integers(1, 10), tj=st.integers(1, 10), tk=st.integers(1, 10),
)
@settings(max_examples=80, deadline=None)
def test_bandwidth_identity(m, n, k, ti, tj, tk):
    # MACs per tile times bandwidth per MAC is exactly the words fetched
    w = make_gemm(m, n, k)
    ts = make_scheme(w, (min(ti, m), min(tj, n), min(tk, k)))
    assert ts.bandwidth_per_mac * ts.macs == ts.input_words


def test_correlation_tiles_enumerable():
    w = make_correlation(8, 12, 12, 3, 3)
    tiles = enumerate_tiles(w, 1024, 256)
    assert tiles
    assert all(sum(t.footprints) <= 1024 for t in tiles)
