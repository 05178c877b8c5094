"""Two-stage self-similarity denoiser for Bayer RAW video."""

from rawden.errors import (
    ConfigError,
    DimensionError,
    FormatError,
    ParameterError,
    RawdenError,
)
from rawden.frames import CfaFrame, PackedFrame, RgbFrame, VideoWindow, pack_cfa, unpack_cfa
from rawden.noise import IsoCalibration, NoiseModel
from rawden.pipeline import PipelineConfig, run_pipeline

__all__ = [
    "CfaFrame",
    "ConfigError",
    "DimensionError",
    "FormatError",
    "IsoCalibration",
    "NoiseModel",
    "PackedFrame",
    "ParameterError",
    "PipelineConfig",
    "RawdenError",
    "RgbFrame",
    "VideoWindow",
    "pack_cfa",
    "run_pipeline",
    "unpack_cfa",
]
