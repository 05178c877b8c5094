"""Luma/chroma decorrelating transforms and the two ends of the ISP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rawden.errors import DimensionError, ParameterError
from rawden.frames import CfaFrame, PackedFrame, RgbFrame, site_offsets


@dataclass(frozen=True)
class ColorTransform:
    matrix: np.ndarray
    inverse: np.ndarray = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        m.flags.writeable = False
        inv = np.linalg.inv(m)
        inv.flags.writeable = False
        if not np.allclose(m @ inv, np.eye(len(m)), rtol=0, atol=1e-10):
            raise ParameterError("colour matrix inverse failed the identity check")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "inverse", inv)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def forward(self, data: np.ndarray) -> np.ndarray:
        return _apply(self.matrix, data)

    def backward(self, data: np.ndarray) -> np.ndarray:
        return _apply(self.inverse, data)


def _apply(matrix, data):
    data = np.asarray(data)
    if data.shape[0] != matrix.shape[1]:
        raise DimensionError(f"{data.shape[0]} channels for a {matrix.shape[1]}-channel transform")
    out = np.tensordot(matrix, data.astype(np.float64), axes=(1, 0))
    return out.astype(data.dtype if data.dtype.kind == "f" else np.float64)


# Rows: Y, U, V, W. Columns: R, G1, B, G2. Luma weights green more heavily;
# chroma rows sum to zero.
YUVW = ColorTransform(
    [
        [0.3162, 0.65, 0.2345, 0.65],
        [-0.5, 0.5, -0.5, 0.5],
        [0.65, 0.2784, -0.65, -0.2784],
        [-0.2784, 0.65, 0.2784, -0.65],
    ]
)

YUV = ColorTransform(
    [
        [0.299, 0.587, 0.114],
        [-0.147, -0.289, 0.436],
        [0.615, -0.515, -0.100],
    ]
)


def to_yuvw(frame: PackedFrame) -> PackedFrame:
    return PackedFrame(YUVW.forward(frame.data))


def from_yuvw(frame: PackedFrame) -> PackedFrame:
    return PackedFrame(YUVW.backward(frame.data))


def to_yuv(frame: RgbFrame) -> RgbFrame:
    return RgbFrame(YUV.forward(frame.data))


def from_yuv(frame: RgbFrame) -> RgbFrame:
    return RgbFrame(YUV.backward(frame.data))


@dataclass(frozen=True)
class IspParams:
    """Black level, white balance, colour correction and gamma.

    ``white_level`` is the raw saturation value; finished images are
    normalised by ``white_level - black_level``.
    """

    black_level: float = 0.0
    wb_gains: tuple = (1.0, 1.0, 1.0, 1.0)
    ccm: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    gamma: float = 2.2
    white_level: float = 65535.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        gains = tuple(float(g) for g in self.wb_gains)
        if len(gains) != 4 or min(gains) <= 0:
            raise ParameterError(f"need 4 positive white-balance gains, got {gains}")
        object.__setattr__(self, "wb_gains", gains)
        if np.shape(self.ccm) != (3, 3):
            raise ParameterError("ccm must be 3x3")
        if self.white_level <= self.black_level:
            raise ParameterError("white level must exceed black level")

    @property
    def scale(self) -> float:
        return float(self.white_level - self.black_level)


def apply_early_isp(frame: CfaFrame, isp: IspParams) -> CfaFrame:
    """Subtract black level and apply white balance. Negative values are kept."""
    out = np.asarray(frame.data, dtype=np.float32) - np.float32(isp.black_level)
    for gain, (dy, dx) in zip(isp.wb_gains, site_offsets(frame.phase)):
        out[dy::2, dx::2] *= np.float32(gain)
    return CfaFrame(out, frame.phase)


def apply_finishing_isp(frame: RgbFrame, isp: IspParams) -> RgbFrame:
    """Normalise, colour-correct and gamma-encode linear RGB into [0, 1]."""
    x = np.clip(np.asarray(frame.data, dtype=np.float64) / isp.scale, 0.0, 1.0)
    x = np.clip(np.tensordot(np.asarray(isp.ccm, dtype=np.float64), x, axes=(1, 0)), 0.0, 1.0)
    return RgbFrame(x ** (1.0 / isp.gamma))


def quantize16(frame: RgbFrame) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame.data) * 65535.0), 0, 65535).astype(np.uint16)
