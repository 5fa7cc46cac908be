import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vectormesh.butterfly import check_conflict_free
from vectormesh.mapping import (
    AssignmentError,
    block_split,
    default_assignment,
    iter_cycles,
    lower_to_teu,
    sharing_axes,
    split_ranges,
)
from vectormesh.tiling import make_scheme, select_tile
from vectormesh.workloads import make_conv, make_correlation, make_gemm


def test_gemm_sharing_directions():
    # the blocked-product layout: left operand rides the horizontal FIFOs
    # (invariant to the column-assigned index), right operand the vertical
    w = make_gemm(8, 8, 8)
    ts = make_scheme(w, (4, 4, 8))
    sp = sharing_axes(w, ts, (2, 2), {"row": 0, "col": 1})
    assert sp.shareable[(0, "col")] and not sp.shareable[(0, "row")]
    assert sp.shareable[(1, "row")] and not sp.shareable[(1, "col")]
    assert sp.share_dir == ("col", "row")


def test_solo_mesh_no_sharing():
    w = make_gemm(8, 8, 8)
    ts = make_scheme(w, (4, 4, 8))
    sp = sharing_axes(w, ts, (1, 1))
    assert sp.share_dir == (None, None)
    assert not sp.sharing_enabled


def test_conv_kernel_shareable_along_spatial():
    w = make_conv(4, 8, 12, 12, 3, 3)
    ts = make_scheme(w, (4, 4, 4, 4, 3, 3))
    sp = sharing_axes(w, ts, (2, 2), {"row": 0, "col": 1})
    # kernel ignores output pixels: shareable along the o_w-assigned axis
    assert sp.shareable[(1, "col")]
    assert not sp.shareable[(1, "row")]
    # feature map ignores the filter index
    assert sp.shareable[(0, "row")]


def test_temporal_assignment_rejected():
    w = make_gemm(8, 8, 8)
    ts = make_scheme(w, (4, 4, 8))
    with pytest.raises(AssignmentError):
        sharing_axes(w, ts, (2, 2), {"row": 0, "col": 2})


def test_default_assignment_prefers_large_extents():
    w = make_conv(16, 8, 30, 30, 3, 3)
    a = default_assignment(w, (2, 2))
    assert a == {"row": 1, "col": 2}


def test_jobs_partition_domain():
    w = make_gemm(10, 7, 5)
    ts = make_scheme(w, (3, 2, 5))
    sp = sharing_axes(w, ts, (2, 2))
    seen = set()
    for r in range(2):
        for c in range(2):
            for _, box in sp.jobs_for(r, c):
                pts = set(itertools.product(*[range(lo, hi + 1) for lo, hi in box]))
                assert not (pts & seen)
                seen |= pts
    assert len(seen) == 10 * 7


def test_lowering_issue_counts():
    w = make_gemm(8, 16, 4)
    ts = make_scheme(w, (8, 16, 4))
    prog = lower_to_teu(w, ts, pe_factorization=(4, 8))
    assert prog.pe_grid == (4, 8)
    assert prog.issues_per_step == 4  # 8*16 face over 32 lanes
    assert prog.temporal_steps == 4
    assert prog.bubble_lane_cycles == 0


def test_exact_face_single_issue():
    w = make_gemm(4, 8, 2)
    ts = make_scheme(w, (4, 8, 2))
    prog = lower_to_teu(w, ts)
    assert prog.issues_per_step == 1


def test_factorization_invariance_of_work():
    w = make_gemm(32, 32, 2)
    ts = make_scheme(w, (32, 32, 2))
    a = lower_to_teu(w, ts, pe_factorization=(32, 1))
    b = lower_to_teu(w, ts, pe_factorization=(1, 32))
    assert a.macs == b.macs == 32 * 32 * 2


def test_under_filled_face_counts_bubbles():
    w = make_gemm(3, 5, 2)
    ts = make_scheme(w, (3, 5, 2))
    prog = lower_to_teu(w, ts)
    assert prog.face_points == 15
    assert prog.bubble_lane_cycles == (prog.issues_per_step * 32 - 15) * 2


def test_patterns_checked_and_distinct_slots():
    w = make_conv(3, 4, 10, 10, 3, 3, stride=2)
    ts = select_tile(w, 512, 128)
    prog = lower_to_teu(w, ts)
    for pat in prog.patterns:
        assert check_conflict_free(pat).ok
    for per_tensor, slots in itertools.islice(iter_cycles(w, ts, prog), 20):
        live = [s for s in slots if s is not None]
        assert len(live) == len(set(live))
        for ti, addrs in enumerate(per_tensor):
            live_addrs = [a for a in addrs if a is not None]
            assert all(0 <= a < prog.layouts[ti].words for a in live_addrs)


def test_correlation_lowers_on_pixel_axes():
    w = make_correlation(8, 16, 16, 3, 3)
    ts = select_tile(w, 8192, 1280)
    prog = lower_to_teu(w, ts)
    # displacement axes share tensor dims with pixel axes, so lanes land
    # on the pixel extents only
    assert prog.pe_grid[0] == 1 and prog.pe_grid[1] == 1


def test_split_ranges_and_block_split():
    assert split_ranges(10, 4) == ((0, 3), (4, 7), (8, 9))
    assert block_split(5, 2) == ((0, 1, 2), (3, 4))
    assert block_split(2, 4) == ((0,), (1,), (), ())


@given(
    m=st.integers(1, 12), n=st.integers(1, 12), k=st.integers(1, 6),
    ti=st.integers(1, 12), tj=st.integers(1, 12),
    rows=st.integers(1, 3), cols=st.integers(1, 3),
)
@settings(max_examples=60, deadline=None)
def test_job_partition_property(m, n, k, ti, tj, rows, cols):
    w = make_gemm(m, n, k)
    ts = make_scheme(w, (min(ti, m), min(tj, n), k))
    sp = sharing_axes(w, ts, (rows, cols))
    count = 0
    for r in range(rows):
        for c in range(cols):
            for _, box in sp.jobs_for(r, c):
                v = 1
                for lo, hi in box:
                    v *= hi - lo + 1
                count += v
    assert count == m * n
