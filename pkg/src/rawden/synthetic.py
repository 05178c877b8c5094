"""Deterministic synthetic video with known clean frames, for trend experiments.

The scene is a textured canvas under global translation with one disc
moving against it, so sequences contain texture, edges, flat areas and
occlusions. Values are linear RGB after black-level removal and white
balance; the sensor signal is recovered by dividing out the gains.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage as ndi

from rawden.color import IspParams, apply_finishing_isp
from rawden.frames import CfaFrame, RgbFrame, frame_data, site_offsets
from rawden.noise import NoiseModel, inject_noise

BLACK_LEVEL = 256.0
WHITE_LEVEL = 16383.0
WB_GAINS = (1.9, 1.0, 1.5, 1.0)

# (iso, a, b) for the sensor read in ADU above black level
NOISE_LEVELS = {"low": (3200, 15.0, 2000.0), "high": (25600, 150.0, 20000.0)}


def default_isp() -> IspParams:
    return IspParams(black_level=BLACK_LEVEL, wb_gains=WB_GAINS, white_level=WHITE_LEVEL)


def noise_model(level: str) -> NoiseModel:
    iso, a, b = NOISE_LEVELS[level]
    return NoiseModel(a, b, offset=BLACK_LEVEL, channel_scales=WB_GAINS, iso=iso)


EDGE_SIGMA = 0.8  # softens object edges to a plausible optical blur


def _canvas(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = np.stack([0.25 + 0.15 * xx, 0.30 + 0.10 * yy, 0.20 + 0.10 * (1 - xx)])
    # colour texture with energy at several scales, mostly achromatic
    tex = sum(s * ndi.gaussian_filter(rng.standard_normal((3, h, w)), (0, s, s)) for s in (2.0, 4.0, 10.0))
    tex = 0.7 * tex.mean(0, keepdims=True) + 0.3 * tex
    img = base + 0.1 * tex / tex.std()
    # gratings of varying frequency and orientation in a few tiles
    for _ in range(6):
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        rad = rng.integers(18, 40)
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.04, 0.15)
        region = (np.abs(np.arange(h)[:, None] - cy) < rad) & (np.abs(np.arange(w)[None] - cx) < rad)
        phase = 2 * np.pi * freq * (np.cos(theta) * np.arange(w)[None] + np.sin(theta) * np.arange(h)[:, None])
        img += region * 0.12 * np.sin(phase) * rng.uniform(0.5, 1.0, (3, 1, 1))
    # flat rectangles
    for _ in range(8):
        y0, x0 = rng.integers(0, h - 20), rng.integers(0, w - 20)
        dh, dw = rng.integers(12, 50, 2)
        m = np.zeros((h, w))
        m[y0 : y0 + dh, x0 : x0 + dw] = 1.0
        m = ndi.gaussian_filter(m, EDGE_SIGMA)
        img = img * (1 - m) + m * rng.uniform(0.05, 0.7, (3, 1, 1))
    return np.clip(img, 0.02, 0.9)


@dataclass
class SyntheticSequence:
    clean: np.ndarray  # (T, 3, H, W) linear RGB after white balance
    isp: IspParams = field(default_factory=default_isp)
    phase: str = "RGGB"

    @property
    def n_frames(self) -> int:
        return self.clean.shape[0]

    def sensor(self) -> list:
        """Clean CFA sensor signal above black level."""
        return [mosaic(f, self.phase, self.isp.wb_gains) for f in self.clean]

    def noisy(self, model: NoiseModel, seed: int = 0) -> list:
        return [inject_noise(f, model, seed, t) for t, f in enumerate(self.sensor())]

    def reference(self) -> list:
        """Finished clean frames, the ground truth for metrics."""
        return [apply_finishing_isp(RgbFrame(f), self.isp) for f in self.clean]

    def crop(self, n_frames: int | None = None, size: int | None = None) -> "SyntheticSequence":
        clean = self.clean[:n_frames]
        if size is not None:
            clean = clean[..., :size, :size]
        return replace(self, clean=np.ascontiguousarray(clean))


def make_sequence(n_frames: int = 10, size: int = 256, seed: int = 0, shift=(1, 2), disc_shift=(-2, 3)) -> SyntheticSequence:
    """A textured scene translating by ``shift`` pixels per frame with an independently moving disc."""
    rng = np.random.default_rng(seed)
    margin = n_frames * max(abs(s) for s in shift) + 8
    canvas = _canvas(size + 2 * margin, size + 2 * margin, rng)
    disc_colour = rng.uniform(0.1, 0.8, (3, 1, 1))
    disc_tex = ndi.gaussian_filter(rng.standard_normal((size, size)), 2.0)
    disc_tex = 0.08 * disc_tex / disc_tex.std()
    yy, xx = np.mgrid[0:size, 0:size]
    scale = default_isp().scale
    frames = []
    for t in range(n_frames):
        oy, ox = margin + t * shift[0], margin + t * shift[1]
        f = canvas[:, oy : oy + size, ox : ox + size].copy()
        cy = size * 0.4 + t * disc_shift[0]
        cx = size * 0.3 + t * disc_shift[1]
        inside = ((yy - cy) ** 2 + (xx - cx) ** 2 < (size * 0.12) ** 2).astype(np.float64)
        inside = ndi.gaussian_filter(inside, EDGE_SIGMA)
        f = f * (1 - inside) + inside * (disc_colour + disc_tex)
        frames.append(np.clip(f, 0.02, 0.9) * scale)
    return SyntheticSequence(np.stack(frames))


def mosaic(rgb, phase: str = "RGGB", gains=(1.0, 1.0, 1.0, 1.0)) -> CfaFrame:
    """Sample white-balanced RGB on a Bayer grid and divide out the gains."""
    rgb = np.asarray(frame_data(rgb), dtype=np.float64)
    out = np.empty(rgb.shape[1:])
    for channel, gain, (dy, dx) in zip((0, 1, 2, 1), gains, site_offsets(phase)):
        out[dy::2, dx::2] = rgb[channel, dy::2, dx::2] / gain
    return CfaFrame(out, phase)
