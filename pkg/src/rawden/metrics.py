"""Full-reference quality metrics and CSV/JSON reports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from rawden.errors import DimensionError
from rawden.frames import frame_data

log = logging.getLogger(__name__)

PSNR_CAP = 99.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_SSIM_MIN_SIZE = 161
BT601 = np.array([0.299, 0.587, 0.114])


def _as_array(x) -> np.ndarray:
    return np.asarray(frame_data(x), dtype=np.float64)


def _check(a, b):
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 65535.0) -> float:
    """PSNR over all channels; identical inputs report :data:`PSNR_CAP`."""
    a, b = _check(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(peak * peak / mse), PSNR_CAP)


def luma(x) -> np.ndarray:
    x = _as_array(x)
    if x.ndim == 3 and x.shape[0] == 3:
        return np.tensordot(BT601, x, axes=(0, 0))
    if x.ndim == 2:
        return x
    raise DimensionError(f"expected a (3, h, w) or (h, w) image, got {x.shape}")


def _ssim_terms(x, y, data_range, k1=0.01, k2=0.03, sigma=1.5):
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    pad = 5

    def filt(img):
        return ndi.gaussian_filter(img, sigma, truncate=3.5, mode="reflect")[pad:-pad, pad:-pad]

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim(a, b, data_range: float = 65535.0) -> float:
    """Gaussian-window SSIM on BT.601 luma (11x11, sigma 1.5, K1=0.01, K2=0.03)."""
    a, b = _check(a, b)
    x, y = luma(a), luma(b)
    if min(x.shape) < 11:
        raise DimensionError(f"SSIM needs at least 11x11 pixels, got {x.shape}")
    return _ssim_terms(x, y, data_range)[0]


def _downsample(img):
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(a, b, data_range: float = 65535.0) -> float:
    """Five-scale MS-SSIM on BT.601 luma; falls back to SSIM below 161 pixels."""
    a, b = _check(a, b)
    x, y = luma(a), luma(b)
    if min(x.shape) < MS_SSIM_MIN_SIZE:
        log.warning("frame %s below the MS-SSIM minimum size; reporting SSIM", x.shape)
        return ssim(a, b, data_range)
    result = 1.0
    for i, weight in enumerate(MS_SSIM_WEIGHTS):
        full, cs = _ssim_terms(x, y, data_range)
        last = i == len(MS_SSIM_WEIGHTS) - 1
        result *= max(full if last else cs, 0.0) ** weight
        if not last:
            x, y = _downsample(x), _downsample(y)
    return result


@dataclass
class FrameMetrics:
    frame: int
    psnr: float
    ssim: float
    msssim: float
    identical: bool = False


@dataclass
class MetricReport:
    frames: list = field(default_factory=list)
    config_hash: str = ""
    runtime: float = 0.0

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([f.psnr for f in self.frames]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([f.ssim for f in self.frames]))

    @property
    def mean_msssim(self) -> float:
        return float(np.mean([f.msssim for f in self.frames]))

    def summary(self) -> dict:
        return {
            "psnr": self.mean_psnr,
            "ssim": self.mean_ssim,
            "msssim": self.mean_msssim,
            "frames": len(self.frames),
            "config_hash": self.config_hash,
            "runtime": self.runtime,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "psnr", "ssim", "msssim"])
            for f in self.frames:
                writer.writerow([f.frame, f"{f.psnr:.4f}", f"{f.ssim:.6f}", f"{f.msssim:.6f}"])

    def write_json(self, path) -> None:
        data = self.summary() | {"per_frame": [asdict(f) for f in self.frames]}
        Path(path).write_text(json.dumps(data, indent=2))


def evaluate(outputs, references, peak: float = 65535.0) -> MetricReport:
    """Per-frame metrics of 16-bit-scaled outputs against references."""
    if len(outputs) != len(references):
        raise DimensionError(f"{len(outputs)} outputs for {len(references)} references")
    report = MetricReport()
    for i, (o, r) in enumerate(zip(outputs, references)):
        o, r = _check(o, r)
        report.frames.append(
            FrameMetrics(
                i, psnr(o, r, peak), ssim(o, r, peak), ms_ssim(o, r, peak), bool(np.array_equal(o, r))
            )
        )
    return report
