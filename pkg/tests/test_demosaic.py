import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rawden.demosaic import DIRECTIONS, PAD, demosaic, directional_estimates, hamilton_adams_directional
from rawden.frames import PHASES, CfaFrame
from rawden.synthetic import mosaic

INNER = (slice(None), slice(PAD, -PAD), slice(PAD, -PAD))


@pytest.mark.parametrize("phase", PHASES)
def test_constant_is_exact(phase):
    rgb = np.array([0.2, 0.5, 0.7])[:, None, None] * np.ones((3, 24, 28))
    out = demosaic(mosaic(rgb, phase)).data
    np.testing.assert_allclose(out, rgb, atol=1e-12)


@given(
    phase=st.sampled_from(PHASES),
    coef=st.lists(st.floats(-0.02, 0.02), min_size=9, max_size=9),
)
def test_planar_ramp_interior_exact(phase, coef):
    yy, xx = np.mgrid[0:32, 0:36].astype(float)
    c = np.array(coef).reshape(3, 3)
    rgb = np.stack([0.5 + c[k, 0] * yy + c[k, 1] * xx + 0.1 * k for k in range(3)])
    out = demosaic(mosaic(rgb, phase)).data
    assert np.abs(out - rgb)[INNER].max() < 1e-6


@given(phase=st.sampled_from(PHASES), dy=st.floats(-0.02, 0.02), dx=st.floats(-0.02, 0.02))
def test_directional_exact_on_constant_chroma_ramp(phase, dy, dx):
    yy, xx = np.mgrid[0:32, 0:36].astype(float)
    ramp = 0.5 + dy * yy + dx * xx
    rgb = np.stack([ramp + 0.1, ramp, ramp - 0.2])
    for d in DIRECTIONS:
        est = hamilton_adams_directional(mosaic(rgb, phase), d).data
        assert np.abs(est - rgb)[INNER].max() < 1e-6


@given(phase=st.sampled_from(PHASES), coef=st.lists(st.floats(-0.01, 0.01), min_size=3, max_size=3))
def test_gray_world_preserved(phase, coef):
    yy, xx = np.mgrid[0:30, 0:30].astype(float)
    g = 0.4 + coef[0] * yy + coef[1] * xx + coef[2] * 0.01 * xx * yy
    out = demosaic(CfaFrame(g, phase)).data
    assert np.abs(out - g[None])[INNER].max() < 1e-6


def test_weights_normalised_and_cfa_sites_kept():
    rng = np.random.default_rng(0)
    cfa = CfaFrame(rng.uniform(0, 1, (20, 20)), "RGGB")
    _, w = directional_estimates(cfa)
    np.testing.assert_allclose(w.sum(0), 1.0)
    out = demosaic(cfa).data
    np.testing.assert_allclose(out[0, 0::2, 0::2], cfa.data[0::2, 0::2], atol=1e-12)
    np.testing.assert_allclose(out[2, 1::2, 1::2], cfa.data[1::2, 1::2], atol=1e-12)
