import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rawden.color import (
    YUV,
    YUVW,
    ColorTransform,
    IspParams,
    apply_early_isp,
    apply_finishing_isp,
    from_yuv,
    from_yuvw,
    quantize16,
    to_yuv,
    to_yuvw,
)
from rawden.errors import DimensionError, ParameterError
from rawden.frames import CfaFrame, PackedFrame, RgbFrame

finite = st.floats(-1e4, 1e4, allow_nan=False)


@given(arrays(np.float64, (4, 3, 5), elements=finite))
def test_yuvw_roundtrip(data):
    back = from_yuvw(to_yuvw(PackedFrame(data)))
    np.testing.assert_allclose(back.data, data, atol=1e-8)


@given(arrays(np.float64, (3, 4, 2), elements=finite))
def test_yuv_roundtrip(data):
    np.testing.assert_allclose(from_yuv(to_yuv(RgbFrame(data))).data, data, atol=1e-8)


def test_chroma_rows_vanish_on_gray():
    gray4 = YUVW.forward(np.full((4, 1), 3.0))
    np.testing.assert_allclose(gray4[1:, 0], 0.0, atol=1e-12)
    gray3 = YUV.forward(np.full((3, 1), 3.0))
    assert gray3[0, 0] == pytest.approx(3.0)
    np.testing.assert_allclose(gray3[1:, 0], 0.0, atol=1e-12)


def test_transform_checks():
    with pytest.raises(DimensionError):
        YUV.forward(np.zeros((4, 2)))
    with pytest.raises(Exception):
        ColorTransform([[1.0, 1.0], [1.0, 1.0]])


def test_float32_preserved():
    assert YUV.forward(np.zeros((3, 2), np.float32)).dtype == np.float32


def test_early_isp_subtracts_black_and_applies_gains():
    isp = IspParams(black_level=10.0, wb_gains=(2.0, 1.0, 3.0, 1.0))
    f = CfaFrame(np.full((4, 4), 20.0), "RGGB")
    out = apply_early_isp(f, isp).data
    assert out[0, 0] == 20.0 and out[0, 1] == 10.0 and out[1, 1] == 30.0 and out[1, 0] == 10.0
    # values below black level stay negative
    assert apply_early_isp(CfaFrame(np.zeros((2, 2))), isp).data.min() < 0


def test_finishing_isp_range_and_gamma():
    isp = IspParams(white_level=100.0, gamma=2.0)
    out = apply_finishing_isp(RgbFrame(np.array([25.0, -5.0, 500.0]).reshape(3, 1, 1)), isp).data
    np.testing.assert_allclose(out.ravel(), [0.5, 0.0, 1.0])
    assert quantize16(RgbFrame(np.full((3, 1, 1), 1.0))).max() == 65535


def test_isp_validation():
    with pytest.raises(ParameterError):
        IspParams(gamma=0)
    with pytest.raises(ParameterError):
        IspParams(wb_gains=(1, 1, 1))
    with pytest.raises(ParameterError):
        IspParams(black_level=10, white_level=5)
