"""Spatio-temporal patch PCA denoiser and its multiscale wrapper.

For each reference patch the temporal volume through the warped window is
matched against nearby volumes; the best ``K`` are sliced into 2-D patches,
PCA coefficients below ``tau^2 * sigma^2`` are cancelled, and patches lying on
the reference frame are aggregated with a Kaiser window and weights
``1 / (1 + retained)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi
from scipy.linalg import lapack

from rawden.errors import DimensionError
from rawden.patches import (
    aggregate_patches,
    batched,
    clean_patch_map,
    origins,
    patch_view,
    run_batches,
    shifted_ssd,
)

log = logging.getLogger(__name__)

BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class DenoiserParams:
    r: int = 7
    k: int = 66
    m: int = 98
    stride: int = 3
    search_radius: int = 18
    search_stride: int = 3
    kaiser_beta: float = 2.0
    variance_floor: float = 1e-6
    batch: int = 256
    workers: int = 1


@dataclass
class PatchStack:
    patches: np.ndarray  # (M, c, r*r)
    provenance: np.ndarray  # (M, 3) rows of (frame, y, x)
    sigma2: np.ndarray  # (c,)


@dataclass
class DenoiseReport:
    uncovered: int = 0
    retained: list = field(default_factory=list)


def candidate_offsets(radius: int, step: int) -> np.ndarray:
    """Search offsets ordered by L1 distance, then raster order."""
    d = np.arange(-(radius // step) * step, radius + 1, step)
    dy, dx = (a.ravel() for a in np.meshgrid(d, d, indexing="ij"))
    order = np.lexsort((dx, dy, np.abs(dy) + np.abs(dx)))
    return np.stack([dy[order], dx[order]], axis=1)


def frame_order(n: int, ref: int) -> np.ndarray:
    """Window frames ordered by temporal distance to the reference, past first."""
    return np.array(sorted(range(n), key=lambda j: (abs(j - ref), j - ref)))


def volume_distances(frames, clean, oy, ox, offsets, r):
    """Mean over clean frame pairs of the patch SSD between each origin's volume and each candidate.

    Returns ``(n_origins, n_offsets)`` with ``inf`` for unusable candidates.
    """
    n = frames.shape[0]
    _, ny, nx = clean.shape
    dist = np.full((oy.size, len(offsets)), np.inf)
    for k, (dy, dx) in enumerate(offsets):
        qy, qx = oy + dy, ox + dx
        inb = (qy >= 0) & (qy < ny) & (qx >= 0) & (qx < nx)
        qy_c, qx_c = np.clip(qy, 0, ny - 1), np.clip(qx, 0, nx - 1)
        total = np.zeros(oy.size)
        count = np.zeros(oy.size)
        for j in range(n):
            ssd = shifted_ssd(frames[j], frames[j], int(dy), int(dx), r)[oy, ox]
            pair = inb & clean[j, oy, ox] & clean[j, qy_c, qx_c] & np.isfinite(ssd)
            total += np.where(pair, ssd, 0.0)
            count += pair
        dist[:, k] = np.where(count > 0, total / np.maximum(count, 1), np.inf)
    return dist


def match_volumes(frames, masks, ref, y, x, params: DenoiserParams | None = None) -> PatchStack:
    """Build the patch stack for the reference patch at ``(y, x)``."""
    params = params or DenoiserParams()
    frames = np.asarray(frames, dtype=np.float64)
    clean = np.stack([clean_patch_map(m, params.r) for m in np.asarray(masks, bool)])
    clean[ref] = True
    oy, ox = np.array([y]), np.array([x])
    offsets = candidate_offsets(params.search_radius, params.search_stride)
    dist = volume_distances(frames, clean, oy, ox, offsets, params.r)
    pos, valid = _build_stacks(dist, offsets, clean, ref, oy, ox, params)
    sel = pos[0][valid[0]]
    view = patch_view(frames, params.r)
    c = frames.shape[1]
    patches = view[sel[:, 0], :, sel[:, 1], sel[:, 2]].reshape(len(sel), c, -1)
    return PatchStack(patches, sel, np.zeros(c))


def _build_stacks(dist, offsets, clean, ref, oy, ox, params):
    """Positions ``(B, M, 3)`` and validity ``(B, M)`` of each origin's patch stack."""
    n, ny, nx = clean.shape
    k = min(params.k, len(offsets))
    best = np.argsort(dist, axis=1, kind="stable")[:, :k]  # (B, K)
    best_ok = np.isfinite(np.take_along_axis(dist, best, axis=1))
    qy = oy[:, None] + offsets[best, 0]
    qx = ox[:, None] + offsets[best, 1]
    qy_c, qx_c = np.clip(qy, 0, ny - 1), np.clip(qx, 0, nx - 1)
    order = frame_order(n, ref)
    # slices in volume-major order: (B, K, W)
    fj = np.broadcast_to(order, qy.shape + (n,))
    sy = np.broadcast_to(qy_c[..., None], fj.shape)
    sx = np.broadcast_to(qx_c[..., None], fj.shape)
    ok = clean[fj, sy, sx] & best_ok[..., None]
    B = oy.size
    fj, sy, sx, ok = (a.reshape(B, -1) for a in (fj, sy, sx, ok))
    rank = np.cumsum(ok, axis=1)
    take = ok & (rank <= params.m)
    m = min(params.m, fj.shape[1])
    # stable compaction of the taken slices into the first m columns
    idx = np.argsort(~take, axis=1, kind="stable")[:, :m]
    pos = np.stack(
        [np.take_along_axis(a, idx, axis=1) for a in (fj, sy, sx)], axis=-1
    )
    valid = np.take_along_axis(take, idx, axis=1)
    return pos, valid


def pca_hard_threshold(stack, tau, sigma2):
    """Cancel PCA coefficients of a patch stack whose eigenvalues fall below ``tau^2 sigma^2``.

    ``stack`` is ``(M, c, n)`` or batched ``(B, M, c, n)`` (optionally with a
    validity mask via :func:`_pca_batch`). Returns the denoised stack and the
    retained component count per channel.
    """
    stack = np.asarray(stack, dtype=np.float64)
    single = stack.ndim == 3
    if single:
        stack = stack[None]
    valid = np.ones(stack.shape[:2], dtype=bool)
    thr = (np.asarray(tau, dtype=np.float64) ** 2 * np.asarray(sigma2, dtype=np.float64)) * np.ones(
        (stack.shape[0], stack.shape[2])
    )
    out, m = _pca_batch(stack, valid, thr)
    return (out[0], m[0]) if single else (out, m)


def _pca_batch(x, valid, thr):
    """Masked per-channel PCA hard thresholding.

    ``x`` ``(B, M, c, n)``, ``valid`` ``(B, M)``, ``thr`` ``(B, c)``.
    Only eigenpairs at or above the threshold are extracted; stacks that
    keep nothing collapse to their mean.
    """
    B, M, c, n = x.shape
    w = valid.astype(np.float64)[..., None, None]
    cnt = valid.sum(1).astype(np.float64)  # (B,)
    mean = (w * x).sum(1) / np.maximum(cnt, 1.0)[:, None, None]  # (B, c, n)
    xt = ((x - mean[:, None]) * w).transpose(0, 2, 1, 3)  # (B, c, M, n)
    cov = np.matmul(xt.transpose(0, 1, 3, 2), xt) / np.maximum(cnt - 1.0, 1.0)[:, None, None, None]
    proj = np.zeros((B, c, n, n))
    retained = np.zeros((B, c), dtype=np.intp)
    # matrices whose mean eigenvalue clears the threshold keep most components;
    # a full batched decomposition is cheaper for those
    heavy = np.trace(cov, axis1=-2, axis2=-1) / n >= thr
    if heavy.any():
        vals, vecs = np.linalg.eigh(cov[heavy])
        keep = vals >= thr[heavy][:, None]
        proj[heavy] = np.matmul(vecs * keep[:, None, :], vecs.transpose(0, 2, 1))
        retained[heavy] = keep.sum(-1)
    lower = np.nextafter(thr, -np.inf)
    for b, ch in zip(*np.nonzero(~heavy)):
        _, z, m, _, info = lapack.dsyevr(cov[b, ch], compute_v=1, range="V", vl=lower[b, ch], vu=np.inf, lower=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"dsyevr failed with info={info}")
        if m:
            z = z[:, :m]
            proj[b, ch] = z @ z.T
            retained[b, ch] = m
    out = mean[:, None] + np.matmul(xt, proj).transpose(0, 2, 1, 3)
    return out, retained


def kaiser_window(r: int, beta: float) -> np.ndarray:
    k = np.kaiser(r, beta)
    return np.outer(k, k)


def aggregate(patches, ys, xs, retained, shape, kaiser=None, fallback=None):
    """Kaiser- and ``1/(1+m)``-weighted average of patches into a ``(c, h, w)`` frame.

    Returns the frame and the number of pixels no patch covered; those are
    copied from ``fallback`` when given, otherwise left at zero.
    """
    patches = np.asarray(patches, dtype=np.float64)
    n, c, r, _ = patches.shape
    if kaiser is None:
        kaiser = np.ones((r, r))
    num = np.zeros(shape)
    den = np.zeros(shape)
    wts = (1.0 / (1.0 + np.asarray(retained, dtype=np.float64)))[:, :, None, None] * kaiser
    aggregate_patches(num, den, patches, np.asarray(ys), np.asarray(xs), wts)
    return _finish(num, den, fallback)


def _finish(num, den, fallback):
    covered = den > 0
    out = np.where(covered, num / np.where(covered, den, 1.0), 0.0)
    uncovered = int((~covered).sum())
    if uncovered and fallback is not None:
        out = np.where(covered, out, fallback)
    return out, uncovered


def denoise_frame(frames, masks, ref, sigma2_grid, tau, params: DenoiserParams | None = None, report=None):
    """Denoise the reference of a warped window.

    ``sigma2_grid`` ``(c, H-r+1, W'-r+1)`` holds the noise variance of the
    patch at each position; ``tau`` gives one threshold multiplier per channel.
    """
    params = params or DenoiserParams()
    frames = np.asarray(frames, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    n, c, hh, ww = frames.shape
    r = params.r
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != (c,):
        raise DimensionError(f"need {c} thresholds, got {tau.shape}")
    ys = origins(hh, r, params.stride)
    xs = origins(ww, r, params.stride)
    oy, ox = (a.ravel() for a in np.meshgrid(ys, xs, indexing="ij"))
    clean = np.stack([clean_patch_map(m, r) for m in masks])
    clean[ref] = True
    view = patch_view(frames, r)
    sig2 = np.maximum(sigma2_grid[:, oy, ox].T, params.variance_floor)  # (N, c)
    thr_all = tau**2 * sig2
    kaiser = kaiser_window(r, params.kaiser_beta)

    offsets = candidate_offsets(params.search_radius, params.search_stride)
    dist = volume_distances(frames, clean, oy, ox, offsets, r)

    def work(sl):
        pos, valid = _build_stacks(dist[sl], offsets, clean, ref, oy[sl], ox[sl], params)
        x = view[pos[..., 0], :, pos[..., 1], pos[..., 2]].reshape(pos.shape[:2] + (c, r * r))
        out, m = _pca_batch(x, valid, thr_all[sl])
        on_ref = valid & (pos[..., 0] == ref)
        b_idx, s_idx = np.nonzero(on_ref)
        patches = out[b_idx, s_idx].reshape(-1, c, r, r)
        wts = (1.0 / (1.0 + m[b_idx]))[:, :, None, None] * kaiser
        return patches, pos[b_idx, s_idx, 1], pos[b_idx, s_idx, 2], wts, m

    slices = batched(oy.size, params.batch)
    results = run_batches(work, slices, params.workers)
    num = np.zeros((c, hh, ww))
    den = np.zeros((c, hh, ww))
    for patches, py, px, wts, m in results:
        aggregate_patches(num, den, patches, py, px, wts)
        if report is not None:
            report.retained.append(m)
    out, uncovered = _finish(num, den, frames[ref])
    if report is not None:
        report.uncovered += uncovered
    return out


def _blur(img):
    out = ndi.correlate1d(img, BINOMIAL5, axis=-1, mode="reflect")
    return ndi.correlate1d(out, BINOMIAL5, axis=-2, mode="reflect")


def pyr_down(img):
    return _blur(np.asarray(img, dtype=np.float64))[..., ::2, ::2]


def pyr_up(img, shape):
    up = np.zeros(img.shape[:-2] + tuple(shape))
    up[..., ::2, ::2] = img
    return 4.0 * _blur(up)


def mask_down(mask):
    spread = ndi.correlate1d(mask.astype(np.float64), np.ones(5), axis=-1, mode="nearest")
    spread = ndi.correlate1d(spread, np.ones(5), axis=-2, mode="nearest")
    return (spread > 0)[..., ::2, ::2]


NOISE_GAIN = float((BINOMIAL5**2).sum() ** 2)  # variance kept by one 2-D binomial blur


def max_scales(shape, r, requested):
    n = 1
    h, w = shape
    while n < requested and (h + 1) // 2 >= r + 2 and (w + 1) // 2 >= r + 2:
        h, w = (h + 1) // 2, (w + 1) // 2
        n += 1
    return n


def multiscale_denoise(frames, masks, ref, var_map, matrix, taus, params: DenoiserParams | None = None):
    """Coarse-to-fine denoising of the reference of a warped window.

    ``var_map`` ``(c0, H, W')`` is the per-pixel noise variance in the
    untransformed channels and ``matrix`` the colour transform applied to
    ``frames``. ``taus`` lists per-channel thresholds from finest to coarsest
    scale. At each finer scale the low-pass band of the noisy reference is
    replaced by the upsampled denoised coarser result before denoising.
    """
    from rawden.noise import local_noise_grid

    params = params or DenoiserParams()
    frames = np.asarray(frames, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    n_scales = max_scales(frames.shape[-2:], params.r, len(taus))
    if n_scales < len(taus):
        log.warning("frame %s too small for %d scales; using %d", frames.shape[-2:], len(taus), n_scales)
    f_pyr, m_pyr, v_pyr = [frames], [masks], [np.asarray(var_map, dtype=np.float64)]
    for _ in range(n_scales - 1):
        f_pyr.append(pyr_down(f_pyr[-1]))
        m_pyr.append(mask_down(m_pyr[-1]))
        v_pyr.append(pyr_down(v_pyr[-1]) * NOISE_GAIN)
    den = None
    for s in range(n_scales - 1, -1, -1):
        level = f_pyr[s].copy()
        if den is not None:
            noisy = level[ref]
            low = pyr_up(pyr_down(noisy), noisy.shape[-2:])
            level[ref] = noisy - low + pyr_up(den, noisy.shape[-2:])
        grid = local_noise_grid(v_pyr[s], params.r, matrix, params.variance_floor)
        den = denoise_frame(level, m_pyr[s], ref, grid, taus[s], params)
    return den
