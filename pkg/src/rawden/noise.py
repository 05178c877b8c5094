"""Signal-dependent Gaussian sensor noise: model, synthesis and variance propagation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from rawden.errors import ConfigError, DimensionError, ParameterError
from rawden.frames import CfaFrame, PackedFrame, RgbFrame, frame_data
from rawden.patches import box_sum

DEFAULT_VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class NoiseModel:
    """Variance law ``a*x + b`` of a sensor read, plus black level and channel gains.

    ``x`` is the true signal above black level, in ADU.
    """

    a: float
    b: float
    offset: float = 0.0
    channel_scales: tuple = (1.0, 1.0, 1.0, 1.0)
    iso: float | None = None

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ParameterError(f"noise parameters must be nonnegative, got a={self.a}, b={self.b}")
        scales = tuple(float(s) for s in self.channel_scales)
        if any(s <= 0 for s in scales):
            raise ParameterError(f"channel scales must be positive, got {scales}")
        object.__setattr__(self, "channel_scales", scales)

    @property
    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def variance(self, x):
        """Per-pixel variance, floored at zero below black level."""
        return np.maximum(self.a * np.asarray(x, dtype=np.float64) + self.b, 0.0)

    def rgb_scales(self) -> tuple:
        r, g1, b, g2 = self.channel_scales
        return (r, 0.5 * (g1 + g2), b)


def stage2_noise_curve(model: NoiseModel, alpha: float) -> NoiseModel:
    """Model whose standard deviation is ``alpha`` times that of ``model``."""
    if not 0 <= alpha <= 1:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    return replace(model, a=alpha**2 * model.a, b=alpha**2 * model.b)


def keyed_normals(seed: int, frame_index: int, n: int) -> np.ndarray:
    """Standard normals for pixels ``0..n-1`` of one frame.

    Pixel ``i`` consumes words ``2i`` and ``2i+1`` of a Philox stream keyed by
    ``(seed, frame_index)``, so a value depends only on its key and index.
    """
    bitgen = np.random.Philox(key=np.array([seed, frame_index], dtype=np.uint64))
    words = bitgen.random_raw(2 * n).reshape(n, 2)
    u = ((words >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])


def inject_noise(clean, model: NoiseModel, seed: int, frame_index: int = 0):
    """Draw a noisy sensor read for every pixel of ``clean``.

    ``clean`` is a frame (or plain array) of true values above black level.
    The result has the same type; values are ``Normal(x + offset, a*x + b)``.
    """
    is_frame = isinstance(clean, (CfaFrame, PackedFrame, RgbFrame))
    x = np.asarray(frame_data(clean), dtype=np.float64)
    var = model.a * x + model.b
    if np.any(var < 0):
        raise ParameterError("negative noise variance; clean values must be >= -b/a")
    z = keyed_normals(seed, frame_index, x.size).reshape(x.shape)
    out = x + model.offset + np.sqrt(var) * z
    if is_frame:
        kwargs = {"phase": clean.phase} if hasattr(clean, "phase") else {}
        return type(clean)(out, **kwargs)
    return out


@dataclass
class IsoCalibration:
    """Noise anchors measured at a few ISOs, with linear fits of ``a`` and ``sqrt(b)``."""

    anchors: list
    offset: float = 0.0
    wb_gains: tuple = (1.0, 1.0, 1.0, 1.0)
    a_fit: tuple = field(init=False)
    sqrt_b_fit: tuple = field(init=False)

    def __post_init__(self):
        if len(self.anchors) < 2:
            raise ParameterError("ISO interpolation needs at least two anchors")
        iso = np.array([float(p[0]) for p in self.anchors])
        a = np.array([float(p[1]) for p in self.anchors])
        b = np.array([float(p[2]) for p in self.anchors])
        if len(np.unique(iso)) < 2:
            raise ParameterError("ISO anchors must span at least two distinct ISOs")
        self.a_fit = tuple(np.polyfit(iso, a, 1))
        self.sqrt_b_fit = tuple(np.polyfit(iso, np.sqrt(b), 1))

    @classmethod
    def from_dict(cls, d: dict) -> "IsoCalibration":
        try:
            anchors = [(p["iso"], p["a"], p["b"]) for p in d["anchors"]]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"calibration: malformed anchors ({exc})") from None
        return cls(anchors, float(d.get("offset", 0.0)), tuple(d.get("wb_gains", (1.0,) * 4)))

    @classmethod
    def load(cls, path) -> "IsoCalibration":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"calibration {path}: {exc}") from None


def interpolate_iso(calib: IsoCalibration, iso: float) -> NoiseModel:
    if iso <= 0:
        raise ParameterError(f"ISO must be positive, got {iso}")
    a = max(float(np.polyval(calib.a_fit, iso)), 0.0)
    sqrt_b = max(float(np.polyval(calib.sqrt_b_fit, iso)), 0.0)
    return NoiseModel(a, sqrt_b**2, calib.offset, tuple(calib.wb_gains), iso)


def variance_map(data: np.ndarray, model: NoiseModel, scales=None) -> np.ndarray:
    """Per-pixel ``l_c^2 * var(x_c / l_c)`` for a ``(c, h, w)`` array of scaled values."""
    data = np.asarray(data, dtype=np.float64)
    if scales is None:
        scales = model.channel_scales
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape[0] != data.shape[0]:
        raise DimensionError(f"{scales.shape[0]} channel scales for {data.shape[0]} channels")
    l = scales.reshape((-1,) + (1,) * (data.ndim - 1))
    return l**2 * model.variance(data / l)


def patch_variance(patch_values, model: NoiseModel, scales=None) -> np.ndarray:
    """Mean modelled variance over a patch, per channel.

    ``patch_values`` is indexable per channel; each entry lists the pixel
    values of that channel in the post-scaling domain.
    """
    channels = [np.asarray(v, dtype=np.float64).ravel() for v in patch_values]
    if not channels or any(v.size == 0 for v in channels):
        raise DimensionError("empty patch")
    if scales is None:
        scales = model.channel_scales[: len(channels)]
    if len(scales) != len(channels):
        raise DimensionError(f"{len(scales)} channel scales for {len(channels)} channels")
    return np.array([l**2 * model.variance(v / l).mean() for v, l in zip(channels, scales)])


def transform_variance(variances, matrix) -> np.ndarray:
    """Propagate independent per-channel variances through a linear colour map.

    ``variances`` has the channel axis first and may carry trailing axes.
    """
    variances = np.asarray(variances, dtype=np.float64)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != variances.shape[0]:
        raise DimensionError(f"matrix {matrix.shape} does not match {variances.shape[0]} channels")
    return np.tensordot(matrix**2, variances, axes=(1, 0))


def local_noise_grid(var_map: np.ndarray, r: int, matrix=None, floor: float = 0.0) -> np.ndarray:
    """Per-patch noise variance at every ``r x r`` position.

    Averages a per-pixel variance map over each patch and, if ``matrix`` is
    given, maps the result into the transformed colour domain.
    """
    grid = box_sum(var_map, r) / (r * r)
    if matrix is not None:
        grid = transform_variance(grid, matrix)
    return np.maximum(grid, floor)
