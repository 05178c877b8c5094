"""Patch-grid helpers shared by the prefilter and the block denoiser."""

from __future__ import annotations

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from rawden.errors import DimensionError


def origins(size: int, r: int, stride: int) -> np.ndarray:
    """Top-left coordinates of a patch sweep that always reaches the last pixel."""
    if size < r:
        raise DimensionError(f"frame dimension {size} smaller than patch size {r}")
    pos = list(range(0, size - r + 1, stride))
    if pos[-1] != size - r:
        pos.append(size - r)
    return np.array(pos, dtype=np.intp)


def box_sum(img: np.ndarray, r: int) -> np.ndarray:
    """Sum over every ``r x r`` window of the last two axes (valid positions only)."""
    img = np.asarray(img, dtype=np.float64)
    pad = [(0, 0)] * (img.ndim - 2) + [(1, 0), (1, 0)]
    s = np.pad(img, pad).cumsum(-2).cumsum(-1)
    return s[..., r:, r:] - s[..., :-r, r:] - s[..., r:, :-r] + s[..., :-r, :-r]


def clean_patch_map(mask: np.ndarray, r: int) -> np.ndarray:
    """True at patch positions whose ``r x r`` support holds no masked pixel."""
    return box_sum(mask.astype(np.float64), r) < 0.5


def patch_view(data: np.ndarray, r: int) -> np.ndarray:
    """Read-only view ``(..., H-r+1, W-r+1, r, r)`` of all patches."""
    return sliding_window_view(data, (r, r), axis=(-2, -1))


def shifted_ssd(a: np.ndarray, b: np.ndarray, dy: int, dx: int, r: int) -> np.ndarray:
    """Channel-summed SSD between patches of ``a`` at p and of ``b`` at p + (dy, dx).

    ``a`` and ``b`` are ``(c, h, w)``. Returns an array over patch positions p
    of ``a`` with ``inf`` where the shifted patch leaves ``b``.
    """
    _, h, w = a.shape
    ny, nx = h - r + 1, w - r + 1
    out = np.full((ny, nx), np.inf)
    y0, y1 = max(0, -dy), min(h, h - dy)
    x0, x1 = max(0, -dx), min(w, w - dx)
    if y1 - y0 < r or x1 - x0 < r:
        return out
    diff = a[:, y0:y1, x0:x1] - b[:, y0 + dy : y1 + dy, x0 + dx : x1 + dx]
    ssd = box_sum((diff * diff).sum(0), r)
    out[y0 : y0 + ssd.shape[0], x0 : x0 + ssd.shape[1]] = ssd
    return out


def aggregate_patches(num, den, patches, ys, xs, weights) -> None:
    """Accumulate weighted patches into ``num``/``den`` in array order.

    ``patches`` is ``(n, c, r, r)``; ``weights`` broadcasts against it.
    Accumulation is sequential, so results do not depend on how callers
    split the work.
    """
    if patches.shape[0] == 0:
        return
    weights = np.ascontiguousarray(np.broadcast_to(weights, patches.shape), dtype=np.float64)
    _scatter(
        num,
        den,
        np.ascontiguousarray(patches, dtype=np.float64),
        np.asarray(ys, dtype=np.int64),
        np.asarray(xs, dtype=np.int64),
        weights,
    )


@numba.njit(cache=True)
def _scatter(num, den, patches, ys, xs, weights):
    n, c, r, _ = patches.shape
    for i in range(n):
        y0 = ys[i]
        x0 = xs[i]
        for ch in range(c):
            for dy in range(r):
                for dx in range(r):
                    w = weights[i, ch, dy, dx]
                    num[ch, y0 + dy, x0 + dx] += w * patches[i, ch, dy, dx]
                    den[ch, y0 + dy, x0 + dx] += w


def _aggregate_numpy(num, den, patches, ys, xs, weights) -> None:
    """Reference for :func:`aggregate_patches` built on ``np.bincount``."""
    n, c, r, _ = patches.shape
    if n == 0:
        return
    weights = np.broadcast_to(weights, patches.shape)
    dy, dx = np.mgrid[0:r, 0:r]
    yy = (ys[:, None, None] + dy).reshape(n, 1, -1)
    xx = (xs[:, None, None] + dx).reshape(n, 1, -1)
    cc = np.arange(c).reshape(1, c, 1)
    idx = np.ravel_multi_index(np.broadcast_arrays(cc, yy, xx), num.shape).ravel()
    size = num.size
    num += np.bincount(idx, (weights * patches).ravel(), minlength=size).reshape(num.shape)
    den += np.bincount(idx, weights.ravel(), minlength=size).reshape(den.shape)


def run_batches(fn, items, workers: int = 1):
    """Map ``fn`` over ``items`` and return results in input order."""
    if workers <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def batched(n: int, size: int) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]
