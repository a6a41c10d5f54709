import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbleride.cells import (GridError, build_D_N, build_V_N, conditional_law, knot_stride,
                              partition_from_noise, project_dyadic)
from bubbleride.noise import sample_noise


@settings(max_examples=300, deadline=None)
@given(level=st.integers(0, 4), x=st.floats(-300, 300))
def test_projection_properties(level, x):
    s = 4.0**level
    p = float(project_dyadic(x, level))
    if abs(x) <= s:
        assert 0.0 <= x - p <= s**-1
        assert (p * s).is_integer()
    else:
        assert p == s * np.sign(x)
    assert float(project_dyadic(p, level)) == p


def test_V_N_refinement_defect():
    # same knots at level 1, different knots at level 0: V^N cells do not nest
    B = np.array([[0.0, 0.3, 0.8], [0.0, 0.45, 1.15]])
    v1 = build_V_N(B, 1)
    v0 = build_V_N(B, 0)
    np.testing.assert_array_equal(v1[0], v1[1])
    np.testing.assert_array_equal(v0, [[0.0, 0.0], [0.0, 1.0]])


def test_D_N_refines():
    tau = np.array([0.05, 0.3, 0.6, 0.9, np.inf])
    d1 = build_D_N(tau, 1.0, 1)
    d2 = build_D_N(tau, 1.0, 2)
    np.testing.assert_array_equal(d2[:, ::2], d1)
    np.testing.assert_array_equal(d1, [[0, 1], [0, 1], [0, 0], [0, 0], [0, 0]])


def test_knot_stride_requires_refinement():
    assert knot_stride(100, 2) == 25
    with pytest.raises(GridError):
        knot_stride(100, 3)


def test_partition_counts_and_prefixes(small_bubble):
    nz = sample_noise(small_bubble)
    part = partition_from_noise(nz.B, nz.tau, small_bubble.horizon_T, small_bubble.dyadic_level)
    assert part.counts.sum() == nz.n_common
    assert part.probs.sum() == pytest.approx(1.0)
    # the prefix partition at the final step is the full partition
    ids, _ = part.prefix_ids(small_bubble.n_steps)
    assert len(np.unique(ids)) == part.n_cells
    # prefixes only get coarser going back in time
    prev = None
    for k in range(small_bubble.n_steps, -1, -5):
        n = len(np.unique(part.prefix_ids(k)[0]))
        assert prev is None or n <= prev
        prev = n


def test_conditional_law_weights():
    cells = np.array([0, 0, 1, 1, 1])
    law = conditional_law(cells, 1, np.array([5.0, 6.0, 1.0, 2.0, 3.0]), np.array([1, 1, 1, 1, 2.0]))
    assert law.mean == pytest.approx((1 + 2 + 6) / 4)
