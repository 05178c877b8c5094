"""Temporal trajectory prefilter.

Every reference patch is followed through the motion-compensated window.
Members lost to occlusion are swapped for the most similar clean patch
nearby, the trajectory is filtered by weighted PCA with noise-derived
cutoffs, and the filtered reference patches are averaged back into a frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rawden.errors import DimensionError
from rawden.mp import get_table
from rawden.patches import (
    aggregate_patches,
    batched,
    clean_patch_map,
    origins,
    patch_view,
    run_batches,
)


@dataclass(frozen=True)
class PrefilterParams:
    r: int = 7
    stride: int = 3
    h: float = 8.75
    rho: int = 5
    threshold_factor: float = 1.25
    mp_trials: int = 1000
    seed: int = 0
    variance_floor: float = 1e-6
    batch: int = 256
    workers: int = 1


@dataclass
class Trajectory:
    members: np.ndarray  # (W, c, r, r)
    reference_index: int
    occluded: np.ndarray  # (W,) bool, before replacement
    sources: list  # (frame, y, x) each member was taken from


@dataclass
class WpcaResult:
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    v1: float
    v2: float
    retained: np.ndarray
    reconstruction: np.ndarray


def collect_trajectory(frames, masks, ref, y, x, r, rho=5) -> Trajectory:
    """Gather the patch at ``(y, x)`` from every warped frame, replacing occluded ones.

    ``frames`` is ``(W, c, H, W')`` and ``masks`` ``(W, H, W')`` with True on
    occluded pixels. The k-th occluded member (in frame order) receives the
    k-th closest clean patch among all frames within ``rho`` pixels of the
    origin, excluding the co-located positions. Ties are broken by temporal
    distance, then spatial distance, then raster order. If candidates run out
    the member becomes the reference patch itself.
    """
    frames = np.asarray(frames)
    n, _, hh, ww = frames.shape
    if not (0 <= y <= hh - r and 0 <= x <= ww - r):
        raise DimensionError(f"patch at ({y}, {x}) leaves the {hh}x{ww} frame")
    ref_patch = frames[ref, :, y : y + r, x : x + r]
    occluded = np.array([masks[j, y : y + r, x : x + r].any() for j in range(n)])
    occluded[ref] = False
    members = np.array([frames[j, :, y : y + r, x : x + r] for j in range(n)])
    sources = [(j, y, x) for j in range(n)]
    todo = np.flatnonzero(occluded)
    if todo.size:
        cands = []
        for j in range(n):
            for dy in range(-rho, rho + 1):
                for dx in range(-rho, rho + 1):
                    qy, qx = y + dy, x + dx
                    if (dy, dx) == (0, 0) or not (0 <= qy <= hh - r and 0 <= qx <= ww - r):
                        continue
                    if masks[j, qy : qy + r, qx : qx + r].any():
                        continue
                    d = float(((frames[j, :, qy : qy + r, qx : qx + r] - ref_patch) ** 2).sum())
                    key = (d, abs(j - ref), abs(dy) + abs(dx), dy, dx)
                    cands.append((key, j, qy, qx))
        cands.sort(key=lambda c: c[0])
        for k, m in enumerate(todo):
            if k < len(cands):
                _, j, qy, qx = cands[k]
                members[m] = frames[j, :, qy : qy + r, qx : qx + r]
                sources[m] = (j, qy, qx)
            else:
                members[m] = ref_patch
                sources[m] = (ref, y, x)
    return Trajectory(members, ref, occluded, sources)


def similarity_weights(rows, ref, sigma2, h):
    """Per-member weights ``exp(-||P - Q||^2 / (h^2 sigma^2))``.

    ``rows`` is ``(..., W, n)``; ``sigma2`` broadcasts against ``(...)``.
    """
    d2 = ((rows - rows[..., ref : ref + 1, :]) ** 2).sum(-1)
    return np.exp(-d2 / (h * h * np.asarray(sigma2)[..., None]))


def _wpca_rows(x, w, s_hat, ref):
    """Batched weighted-PCA reconstruction of row ``ref``.

    ``x`` is ``(B, W, n)``, ``w`` ``(B, W)`` and ``s_hat`` ``(B, k)`` the
    cutoff singular values (already scaled and inflated). Returns the
    reconstructed reference rows, the eigenvalues and the retained masks.
    """
    v1 = w.sum(-1)
    v2 = (w * w).sum(-1)
    denom = v1 * v1 - v2
    ok = denom > 1e-12 * v1 * v1
    c = np.where(ok, v1 / np.where(ok, denom, 1.0), 0.0)
    mean = (w[..., None] * x).sum(-2) / v1[:, None]
    xc = x - mean[:, None, :]
    a = np.sqrt(w)[..., None] * xc
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    lam = c[:, None] * s * s
    delta = c[:, None] * s_hat[:, : s.shape[1]] ** 2
    keep = (lam >= delta) & ok[:, None]
    coef = np.einsum("bn,bkn->bk", xc[:, ref], vt) * keep
    out = mean + np.einsum("bk,bkn->bn", coef, vt)
    return out, lam, keep


def wpca(x, weights, deltas=None, ref=0) -> WpcaResult:
    """Weighted PCA of the rows of ``x`` with eigenvalue cutoffs ``deltas``.

    The covariance is ``V1 / (V1^2 - V2) * Xc^T W Xc`` with ``Xc`` centred on
    the weighted mean. Components whose eigenvalue is below its cutoff are
    dropped before reconstructing every row.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    v1, v2 = w.sum(), (w * w).sum()
    mean = w @ x / v1
    xc = x - mean
    _, s, vt = np.linalg.svd(np.sqrt(w)[:, None] * xc, full_matrices=False)
    degenerate = v1 * v1 - v2 <= 1e-12 * v1 * v1
    c = 0.0 if degenerate else v1 / (v1 * v1 - v2)
    lam = c * s * s
    if deltas is None:
        deltas = np.zeros_like(lam)
    keep = np.zeros_like(lam, dtype=bool) if degenerate else lam >= np.asarray(deltas)[: lam.size]
    v = vt.T
    recon = mean + (xc @ v[:, keep]) @ v[:, keep].T
    return WpcaResult(mean, lam, v, v1, v2, keep, recon)


def mp_cutoffs(weights, sigma2, n_cols, params: PrefilterParams):
    """Cutoff singular values ``factor * sigma * s_hat(weights)``, one row per weight vector."""
    w2 = np.asarray(weights).reshape(-1, weights.shape[-1])
    table = get_table(w2.shape[1], n_cols, params.mp_trials, params.seed)
    s = table.lookup(w2).reshape(weights.shape[:-1] + (table.n_values,))
    return params.threshold_factor * np.sqrt(np.asarray(sigma2))[..., None] * s


def wpca_filter(traj: Trajectory, sigma2, params: PrefilterParams | None = None) -> np.ndarray:
    """Filter the reference patch of ``traj`` given per-channel noise variances."""
    params = params or PrefilterParams()
    members = np.asarray(traj.members, dtype=np.float64)
    n, c, r, _ = members.shape
    rows = members.reshape(n, c, r * r).transpose(1, 0, 2)  # (c, W, n)
    sigma2 = np.maximum(np.asarray(sigma2, dtype=np.float64), params.variance_floor)
    w = similarity_weights(rows, traj.reference_index, sigma2, params.h)
    cut = mp_cutoffs(w, sigma2, r * r, params)
    out, _, _ = _wpca_rows(rows, w, cut, traj.reference_index)
    return out.reshape(c, r, r)


def prefilter_frame(frames, masks, ref, sigma2_grid, params: PrefilterParams | None = None) -> np.ndarray:
    """Prefilter the reference of a warped window.

    ``frames`` ``(W, c, H, W')`` are aligned to the reference, ``masks``
    flag occluded pixels, and ``sigma2_grid`` ``(c, H-r+1, W'-r+1)`` gives
    the transformed-domain noise variance of the patch at each position.
    Overlapping filtered patches are averaged uniformly.
    """
    params = params or PrefilterParams()
    frames = np.asarray(frames, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    n, c, hh, ww = frames.shape
    r = params.r
    ys = origins(hh, r, params.stride)
    xs = origins(ww, r, params.stride)
    oy, ox = (a.ravel() for a in np.meshgrid(ys, xs, indexing="ij"))
    clean = np.stack([clean_patch_map(m, r) for m in masks])
    clean[ref] = True
    view = patch_view(frames, r)  # (W, c, ny, nx, r, r)
    sig2 = np.maximum(sigma2_grid[:, oy, ox].T, params.variance_floor)  # (N, c)

    def work(sl):
        by, bx = oy[sl], ox[sl]
        members = view[:, :, by, bx].transpose(2, 0, 1, 3, 4).copy()  # (B, W, c, r, r)
        occ = ~clean[:, by, bx].T
        for b in np.flatnonzero(occ.any(1)):
            members[b] = collect_trajectory(frames, masks, ref, by[b], bx[b], r, params.rho).members
        B = members.shape[0]
        rows = members.reshape(B, n, c, r * r).transpose(0, 2, 1, 3)  # (B, c, W, n)
        w = similarity_weights(rows, ref, sig2[sl], params.h)
        cut = mp_cutoffs(w, sig2[sl], r * r, params)
        out, _, _ = _wpca_rows(
            rows.reshape(B * c, n, r * r), w.reshape(B * c, n), cut.reshape(B * c, -1), ref
        )
        return out.reshape(B, c, r, r)

    slices = batched(oy.size, params.batch)
    results = run_batches(work, slices, params.workers)
    num = np.zeros((c, hh, ww))
    den = np.zeros((c, hh, ww))
    for sl, patches in zip(slices, results):
        aggregate_patches(num, den, patches, oy[sl], ox[sl], 1.0)
    return num / den
