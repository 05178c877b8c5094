"""Frame containers and Bayer CFA packing.

All containers hold numpy arrays that are marked read-only on construction.
Channel planes are stored first: ``PackedFrame.data`` is ``(4, h, w)`` in the
fixed order R, G1, B, G2 and ``RgbFrame.data`` is ``(3, h, w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rawden.errors import DimensionError, ParameterError

PHASES = ("RGGB", "GRBG", "GBRG", "BGGR")

# (row, col) offset inside the 2x2 tile of the R, G1, B, G2 sites.
# G1 is the green that shares a row with red.
_SITES = {
    "RGGB": ((0, 0), (0, 1), (1, 1), (1, 0)),
    "GRBG": ((0, 1), (0, 0), (1, 0), (1, 1)),
    "GBRG": ((1, 0), (1, 1), (0, 1), (0, 0)),
    "BGGR": ((1, 1), (1, 0), (0, 0), (0, 1)),
}


def site_offsets(phase: str) -> tuple[tuple[int, int], ...]:
    """Return the (row, col) tile offsets of R, G1, B, G2 for ``phase``."""
    try:
        return _SITES[phase.upper()]
    except (KeyError, AttributeError):
        raise ParameterError(f"unknown Bayer phase {phase!r}; expected one of {PHASES}") from None


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True) if dtype is not None else np.array(a, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CfaFrame:
    data: np.ndarray
    phase: str = "RGGB"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DimensionError(f"CFA frame must be 2-D, got shape {data.shape}")
        h, w = data.shape
        if h % 2 or w % 2:
            raise DimensionError(f"CFA frame dimensions must be even, got {w}x{h}")
        site_offsets(self.phase)
        object.__setattr__(self, "phase", self.phase.upper())
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def channel_index(self) -> np.ndarray:
        """Per-pixel plane index (0=R, 1=G1, 2=B, 3=G2)."""
        idx = np.empty(self.data.shape, dtype=np.intp)
        for c, (dy, dx) in enumerate(site_offsets(self.phase)):
            idx[dy::2, dx::2] = c
        return idx


@dataclass(frozen=True)
class PackedFrame:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[0] != 4:
            raise DimensionError(f"packed frame must have shape (4, h, w), got {data.shape}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class RgbFrame:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[0] != 3:
            raise DimensionError(f"RGB frame must have shape (3, h, w), got {data.shape}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class VideoWindow:
    """Temporal neighbourhood of one reference frame."""

    frames: tuple
    reference_index: int = 0
    max_length: int | None = field(default=None, compare=False)

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        if not frames:
            raise DimensionError("empty video window")
        if self.max_length is not None and len(frames) > self.max_length:
            raise DimensionError(f"window of {len(frames)} frames exceeds {self.max_length}")
        if not 0 <= self.reference_index < len(frames):
            raise DimensionError(f"reference index {self.reference_index} outside window")
        kinds = {type(f) for f in frames}
        if len(kinds) != 1:
            raise DimensionError("all frames of a window must be the same kind")
        shapes = {f.data.shape for f in frames}
        if len(shapes) != 1:
            raise DimensionError(f"window frames differ in shape: {sorted(shapes)}")

    def __len__(self):
        return len(self.frames)

    @property
    def reference(self):
        return self.frames[self.reference_index]

    def stack(self) -> np.ndarray:
        return np.stack([f.data for f in self.frames])


def frame_data(x) -> np.ndarray:
    """The array behind a frame, or ``x`` itself for plain arrays."""
    return x.data if isinstance(x, (CfaFrame, PackedFrame, RgbFrame)) else np.asarray(x)


def pack_cfa(frame: CfaFrame) -> PackedFrame:
    planes = [frame.data[dy::2, dx::2] for dy, dx in site_offsets(frame.phase)]
    return PackedFrame(np.stack(planes))


def unpack_cfa(frame: PackedFrame, phase: str = "RGGB") -> CfaFrame:
    packed = frame.data
    out = np.empty((2 * frame.height, 2 * frame.width), dtype=packed.dtype)
    for c, (dy, dx) in enumerate(site_offsets(phase)):
        out[dy::2, dx::2] = packed[c]
    return CfaFrame(out, phase)


def window_indices(t: int, n_frames: int, t_back: int, t_fwd: int) -> tuple[list[int], int]:
    """Frame indices of the window around ``t``, shrunk at sequence ends.

    Returns the index list and the position of ``t`` inside it.
    """
    lo = max(0, t - t_back)
    hi = min(n_frames - 1, t + t_fwd)
    return list(range(lo, hi + 1)), t - lo
