import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rawden.errors import DimensionError, ParameterError
from rawden.frames import (
    PHASES,
    CfaFrame,
    PackedFrame,
    RgbFrame,
    VideoWindow,
    pack_cfa,
    site_offsets,
    unpack_cfa,
    window_indices,
)


@given(
    phase=st.sampled_from(PHASES),
    h=st.integers(1, 8),
    w=st.integers(1, 8),
    seed=st.integers(0, 2**16),
)
def test_pack_unpack_roundtrip(phase, h, w, seed):
    data = np.random.default_rng(seed).integers(0, 65535, (2 * h, 2 * w)).astype(np.uint16)
    frame = CfaFrame(data, phase)
    packed = pack_cfa(frame)
    assert packed.data.shape == (4, h, w)
    back = unpack_cfa(packed, phase)
    np.testing.assert_array_equal(back.data, data)


def test_packing_order_rggb():
    data = np.array([[1, 2], [4, 3]])  # R G1 / G2 B
    packed = pack_cfa(CfaFrame(data, "RGGB"))
    np.testing.assert_array_equal(packed.data[:, 0, 0], [1, 2, 3, 4])


@pytest.mark.parametrize("phase", PHASES)
def test_channel_index_matches_sites(phase):
    frame = CfaFrame(np.zeros((4, 4)), phase)
    idx = frame.channel_index()
    for c, (dy, dx) in enumerate(site_offsets(phase)):
        assert (idx[dy::2, dx::2] == c).all()


def test_g1_shares_row_with_red():
    for phase in PHASES:
        (ry, _), (g1y, _), (by, _), (g2y, _) = site_offsets(phase)
        assert ry == g1y and by == g2y


def test_odd_dimensions_rejected():
    with pytest.raises(DimensionError):
        CfaFrame(np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        CfaFrame(np.zeros((4, 4, 1)))


def test_unknown_phase():
    with pytest.raises(ParameterError):
        CfaFrame(np.zeros((2, 2)), "RGBX")


def test_frames_are_read_only():
    f = CfaFrame(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        f.data[0, 0] = 1
    with pytest.raises(DimensionError):
        PackedFrame(np.zeros((3, 2, 2)))
    with pytest.raises(DimensionError):
        RgbFrame(np.zeros((4, 2, 2)))


def test_window_validation():
    frames = [RgbFrame(np.zeros((3, 4, 4))) for _ in range(3)]
    win = VideoWindow(frames, 1)
    assert len(win) == 3 and win.stack().shape == (3, 3, 4, 4)
    with pytest.raises(DimensionError):
        VideoWindow(frames, 3)
    with pytest.raises(DimensionError):
        VideoWindow(frames, 0, max_length=2)
    with pytest.raises(DimensionError):
        VideoWindow(frames[:1] + [RgbFrame(np.zeros((3, 2, 2)))])
    with pytest.raises(DimensionError):
        VideoWindow([])


@given(n=st.integers(1, 20), tb=st.integers(0, 4), tf=st.integers(0, 4), data=st.data())
def test_window_indices_stay_in_range(n, tb, tf, data):
    t = data.draw(st.integers(0, n - 1))
    idx, ref = window_indices(t, n, tb, tf)
    assert idx[ref] == t
    assert all(0 <= j < n for j in idx)
    assert idx == list(range(max(0, t - tb), min(n - 1, t + tf) + 1))


def test_first_frame_has_no_backward_frames():
    assert window_indices(0, 10, 2, 2) == ([0, 1, 2], 0)
    assert window_indices(9, 10, 2, 2) == ([7, 8, 9], 2)
