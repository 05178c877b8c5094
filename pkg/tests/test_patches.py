import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rawden.errors import DimensionError
from rawden.patches import (
    _aggregate_numpy,
    aggregate_patches,
    batched,
    box_sum,
    clean_patch_map,
    origins,
    patch_view,
    run_batches,
    shifted_ssd,
)


@given(size=st.integers(1, 60), r=st.integers(1, 9), stride=st.integers(1, 5))
def test_origins_cover_every_pixel(size, r, stride):
    assume(stride <= r)
    if size < r:
        with pytest.raises(DimensionError):
            origins(size, r, stride)
        return
    pos = origins(size, r, stride)
    covered = np.zeros(size, bool)
    for p in pos:
        covered[p : p + r] = True
    assert covered.all() and pos[0] == 0 and pos[-1] == size - r
    assert np.all(np.diff(pos) > 0)


def test_box_sum_matches_brute_force(rng):
    img = rng.standard_normal((2, 9, 11))
    out = box_sum(img, 3)
    brute = patch_view(img, 3).sum((-1, -2))
    np.testing.assert_allclose(out, brute, atol=1e-12)


def test_clean_patch_map():
    m = np.zeros((6, 6), bool)
    m[2, 3] = True
    c = clean_patch_map(m, 2)
    assert not c[1, 2] and not c[2, 3] and c[0, 0] and c[4, 4]


@pytest.mark.parametrize("dy,dx", [(0, 0), (2, -1), (-3, 3), (10, 0)])
def test_shifted_ssd(dy, dx, rng):
    a = rng.standard_normal((2, 10, 12))
    b = rng.standard_normal((2, 10, 12))
    r = 3
    out = shifted_ssd(a, b, dy, dx, r)
    for y in range(out.shape[0]):
        for x in range(out.shape[1]):
            qy, qx = y + dy, x + dx
            if 0 <= qy <= 10 - r and 0 <= qx <= 12 - r:
                ref = ((a[:, y : y + r, x : x + r] - b[:, qy : qy + r, qx : qx + r]) ** 2).sum()
                assert out[y, x] == pytest.approx(ref)
            else:
                assert np.isinf(out[y, x])


def test_aggregation_is_split_invariant(rng):
    patches = rng.standard_normal((50, 2, 3, 3))
    ys, xs = rng.integers(0, 8, 50), rng.integers(0, 8, 50)
    w = rng.uniform(0.1, 1, (50, 2, 3, 3))
    num1, den1 = np.zeros((2, 10, 10)), np.zeros((2, 10, 10))
    aggregate_patches(num1, den1, patches, ys, xs, w)
    num2, den2 = np.zeros((2, 10, 10)), np.zeros((2, 10, 10))
    for sl in batched(50, 7):
        aggregate_patches(num2, den2, patches[sl], ys[sl], xs[sl], w[sl])
    np.testing.assert_allclose(num1, num2, atol=1e-12)
    np.testing.assert_allclose(den1, den2, atol=1e-12)


def test_aggregation_matches_bincount_reference(rng):
    patches = rng.standard_normal((80, 3, 4, 4))
    ys, xs = rng.integers(0, 12, 80), rng.integers(0, 9, 80)
    w = rng.uniform(0.1, 1, (80, 3, 1, 1))
    num1, den1 = np.zeros((3, 16, 13)), np.zeros((3, 16, 13))
    aggregate_patches(num1, den1, patches, ys, xs, w)
    num2, den2 = np.zeros((3, 16, 13)), np.zeros((3, 16, 13))
    _aggregate_numpy(num2, den2, patches, ys, xs, w)
    np.testing.assert_array_equal(num1, num2)
    np.testing.assert_array_equal(den1, den2)


def test_run_batches_keeps_order():
    assert run_batches(lambda i: i * i, range(20), workers=4) == [i * i for i in range(20)]
    assert batched(5, 2) == [slice(0, 2), slice(2, 4), slice(4, 5)]
