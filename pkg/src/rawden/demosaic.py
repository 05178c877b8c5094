"""Directional Hamilton-Adams demosaicking.

Four one-sided Hamilton-Adams interpolations (north, south, east, west) are
blended per pixel with weights that fall with the chromatic variation each
one produces along its own direction.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage as ndi

from rawden.frames import CfaFrame, RgbFrame, site_offsets

DIRECTIONS = ("N", "S", "E", "W")
_STEP = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}
_BILINEAR = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 4.0
PAD = 10  # even, so the padded mosaic keeps its phase
EPS = 1e-4
WINDOW = 5


def _site_masks(shape, phase):
    (ry, rx), (g1y, g1x), (by, bx), (g2y, g2x) = site_offsets(phase)
    r = np.zeros(shape, bool)
    g = np.zeros(shape, bool)
    b = np.zeros(shape, bool)
    r[ry::2, rx::2] = True
    b[by::2, bx::2] = True
    g[g1y::2, g1x::2] = True
    g[g2y::2, g2x::2] = True
    return r, g, b


def _shift(a, dy, dx):
    """``out[i, j] = a[i + dy, j + dx]`` (wrapping; callers crop the padded border)."""
    return np.roll(a, (-dy, -dx), axis=(0, 1))


def _directional(padded, masks, direction):
    rm, gm, bm = masks
    dy, dx = _STEP[direction]
    green = np.where(
        gm,
        padded,
        _shift(padded, dy, dx) + 0.5 * (padded - _shift(padded, 2 * dy, 2 * dx)),
    )
    planes = []
    for site in (rm, bm):
        diff = np.where(site, padded - green, 0.0)
        planes.append(green + ndi.correlate(diff, _BILINEAR, mode="constant"))
    return np.stack([planes[0], green, planes[1]])


def hamilton_adams_directional(cfa: CfaFrame, direction: str) -> RgbFrame:
    """Full RGB from a one-sided Hamilton-Adams stencil pointing ``direction``."""
    padded = np.pad(np.asarray(cfa.data, dtype=np.float64), PAD, mode="reflect")
    masks = _site_masks(padded.shape, cfa.phase)
    rgb = _directional(padded, masks, direction)
    return RgbFrame(rgb[:, PAD:-PAD, PAD:-PAD])


def _variation(rgb, direction):
    """Sum of absolute chroma steps over WINDOW pixels extending in ``direction``."""
    dy, dx = _STEP[direction]
    chroma = (rgb[0] - rgb[1], rgb[2] - rgb[1])
    step = sum(np.abs(_shift(c, dy, dx) - c) for c in chroma)
    total = np.zeros_like(step)
    for k in range(WINDOW):
        total += _shift(step, k * dy, k * dx)
    return total


def directional_estimates(cfa: CfaFrame):
    """The four directional RGB estimates and their normalised weights."""
    padded = np.pad(np.asarray(cfa.data, dtype=np.float64), PAD, mode="reflect")
    masks = _site_masks(padded.shape, cfa.phase)
    ests = np.stack([_directional(padded, masks, d) for d in DIRECTIONS])
    weights = np.stack([1.0 / (EPS + _variation(e, d)) ** 2 for e, d in zip(ests, DIRECTIONS)])
    weights /= weights.sum(0)
    crop = (slice(None), slice(None), slice(PAD, -PAD), slice(PAD, -PAD))
    return ests[crop], weights[:, PAD:-PAD, PAD:-PAD]


def demosaic(cfa: CfaFrame) -> RgbFrame:
    ests, weights = directional_estimates(cfa)
    return RgbFrame((weights[:, None] * ests).sum(0))
