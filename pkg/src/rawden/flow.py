"""TV-L1 optical flow, forward/backward consistency and bilinear warping.

The solver is the primal-dual scheme of Zach, Pock and Bischof run
coarse-to-fine with a fixed number of warps and iterations, so a solve is
deterministic. Flows map reference coordinates into the other frame:
``dst(x + flow(x)) ~ src(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage as ndi

from rawden.errors import DimensionError


@dataclass(frozen=True)
class FlowParams:
    lam: float = 0.7
    theta: float = 0.3
    tau: float = 0.25
    scale_factor: float = 0.5
    min_size: int = 16
    n_warps: int = 5
    n_iter: int = 50
    presmooth: float = 0.8


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise DimensionError("flow components differ in shape")

    @property
    def shape(self):
        return self.u.shape

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape, np.float32), np.zeros(shape, np.float32))

    def endpoint_error(self, u, v) -> np.ndarray:
        return np.hypot(self.u - u, self.v - v)


def _sample(img, yy, xx):
    return ndi.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def warp(data, flow: FlowField) -> np.ndarray:
    """Backward bilinear warp of ``data`` (``(h, w)`` or ``(c, h, w)``) along ``flow``.

    Samples outside the frame take the nearest edge value.
    """
    data = np.asarray(data)
    if data.shape[-2:] != flow.shape:
        raise DimensionError(f"flow {flow.shape} does not match frame {data.shape[-2:]}")
    h, w = flow.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy, xx = gy + flow.v, gx + flow.u
    if data.ndim == 2:
        return _sample(data, yy, xx).astype(data.dtype, copy=False)
    return np.stack([_sample(c, yy, xx) for c in data]).astype(data.dtype, copy=False)


def reciprocity_mask(fwd: FlowField, bwd: FlowField, limit: float = 0.25) -> np.ndarray:
    """True where the forward flow is not undone by the backward one, or leaves the frame."""
    if fwd.shape != bwd.shape:
        raise DimensionError("forward and backward flows differ in shape")
    h, w = fwd.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    ty, tx = gy + fwd.v, gx + fwd.u
    outside = (tx < 0) | (tx > w - 1) | (ty < 0) | (ty > h - 1)
    ru = fwd.u + _sample(bwd.u.astype(np.float64), ty, tx)
    rv = fwd.v + _sample(bwd.v.astype(np.float64), ty, tx)
    return outside | (np.hypot(ru, rv) > limit)


def _grad_fwd(f):
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, :-1] = f[:, 1:] - f[:, :-1]
    gy[:-1, :] = f[1:, :] - f[:-1, :]
    return gx, gy


def _div_bwd(px, py):
    # negative adjoint of _grad_fwd
    d = np.zeros_like(px)
    d[:, 0] = px[:, 0]
    d[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    d[:, -1] = -px[:, -2]
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    d[-1, :] += -py[-2, :]
    return d


def _normalize_pair(a, b):
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    span = hi - lo
    if span <= 0:
        return np.zeros_like(a), np.zeros_like(b)
    return (a - lo) * (255.0 / span), (b - lo) * (255.0 / span)


def _pyramid(img, params: FlowParams):
    levels = [img]
    sigma = 0.6 * np.sqrt(1.0 / params.scale_factor**2 - 1.0)
    while True:
        prev = levels[-1]
        shape = tuple(int(round(s * params.scale_factor)) for s in prev.shape)
        if min(shape) < params.min_size:
            break
        smooth = ndi.gaussian_filter(prev, sigma, mode="nearest")
        levels.append(_resize(smooth, shape))
    return levels


def _resize(img, shape):
    zy = (img.shape[0] - 1) / max(shape[0] - 1, 1)
    zx = (img.shape[1] - 1) / max(shape[1] - 1, 1)
    gy, gx = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    return _sample(img, gy * zy, gx * zx)


def _iterate_numpy(rho_c, ix, iy, grad, inv_grad, u1, u2, p11, p12, p21, p22, lt, theta, taut, n_iter):
    """Primal-dual iterations of one warp (vectorised reference version)."""
    for _ in range(n_iter):
        rho = rho_c + ix * u1 + iy * u2
        step = np.where(rho < -lt * grad, lt, np.where(rho > lt * grad, -lt, -rho * inv_grad))
        u1 = u1 + step * ix + theta * _div_bwd(p11, p12)
        u2 = u2 + step * iy + theta * _div_bwd(p21, p22)
        u1x, u1y = _grad_fwd(u1)
        u2x, u2y = _grad_fwd(u2)
        ng1 = 1.0 + taut * np.hypot(u1x, u1y)
        ng2 = 1.0 + taut * np.hypot(u2x, u2y)
        p11 = (p11 + taut * u1x) / ng1
        p12 = (p12 + taut * u1y) / ng1
        p21 = (p21 + taut * u2x) / ng2
        p22 = (p22 + taut * u2y) / ng2
    return u1, u2, p11, p12, p21, p22


@numba.njit(cache=True)
def _div_at(px, py, i, j, h, w):
    if j == 0:
        d = px[i, 0]
    elif j == w - 1:
        d = -px[i, w - 2]
    else:
        d = px[i, j] - px[i, j - 1]
    if i == 0:
        d += py[0, j]
    elif i == h - 1:
        d -= py[h - 2, j]
    else:
        d += py[i, j] - py[i - 1, j]
    return d


@numba.njit(cache=True, error_model="numpy")
def _iterate(rho_c, ix, iy, grad, inv_grad, u1, u2, p11, p12, p21, p22, lt, theta, taut, n_iter):
    """Fused primal-dual iterations of one warp; same arithmetic as :func:`_iterate_numpy`."""
    h, w = u1.shape
    u1 = u1.copy()
    u2 = u2.copy()
    p11 = p11.copy()
    p12 = p12.copy()
    p21 = p21.copy()
    p22 = p22.copy()
    for _ in range(n_iter):
        for i in range(h):
            for j in range(w):
                g = grad[i, j]
                rho = rho_c[i, j] + ix[i, j] * u1[i, j] + iy[i, j] * u2[i, j]
                if rho < -lt * g:
                    step = lt
                elif rho > lt * g:
                    step = -lt
                else:
                    step = -rho * inv_grad[i, j]
                u1[i, j] = u1[i, j] + step * ix[i, j] + theta * _div_at(p11, p12, i, j, h, w)
                u2[i, j] = u2[i, j] + step * iy[i, j] + theta * _div_at(p21, p22, i, j, h, w)
        for i in range(h):
            for j in range(w):
                u1x = u1[i, j + 1] - u1[i, j] if j < w - 1 else 0.0
                u1y = u1[i + 1, j] - u1[i, j] if i < h - 1 else 0.0
                u2x = u2[i, j + 1] - u2[i, j] if j < w - 1 else 0.0
                u2y = u2[i + 1, j] - u2[i, j] if i < h - 1 else 0.0
                ng1 = 1.0 + taut * np.sqrt(u1x * u1x + u1y * u1y)
                ng2 = 1.0 + taut * np.sqrt(u2x * u2x + u2y * u2y)
                p11[i, j] = (p11[i, j] + taut * u1x) / ng1
                p12[i, j] = (p12[i, j] + taut * u1y) / ng1
                p21[i, j] = (p21[i, j] + taut * u2x) / ng2
                p22[i, j] = (p22[i, j] + taut * u2y) / ng2
    return u1, u2, p11, p12, p21, p22


def _solve_level(i0, i1, u1, u2, params: FlowParams):
    lt = params.lam * params.theta
    taut = params.tau / params.theta
    p11 = np.zeros_like(i0)
    p12 = np.zeros_like(i0)
    p21 = np.zeros_like(i0)
    p22 = np.zeros_like(i0)
    h, w = i0.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    i1y, i1x = np.gradient(i1)
    for _ in range(params.n_warps):
        yy, xx = gy + u2, gx + u1
        i1w = _sample(i1, yy, xx)
        i1wx = _sample(i1x, yy, xx)
        i1wy = _sample(i1y, yy, xx)
        grad = i1wx**2 + i1wy**2
        rho_c = i1w - i1wx * u1 - i1wy * u2 - i0
        safe = grad > 1e-10
        inv_grad = np.where(safe, 1.0 / np.where(safe, grad, 1.0), 0.0)
        u1, u2, p11, p12, p21, p22 = _iterate(
            rho_c, i1wx, i1wy, grad, inv_grad, u1, u2, p11, p12, p21, p22, lt, params.theta, taut, params.n_iter
        )
    return u1, u2


def tvl1_flow(src, dst, params: FlowParams | None = None) -> FlowField:
    """TV-L1 flow from ``src`` to ``dst`` (single-channel planes of equal size)."""
    params = params or FlowParams()
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2:
        raise DimensionError(f"flow needs two equal 2-D planes, got {src.shape} and {dst.shape}")
    if min(src.shape) < params.min_size:
        raise DimensionError(f"frame {src.shape} smaller than the coarsest level ({params.min_size} px)")
    i0, i1 = _normalize_pair(src, dst)
    if params.presmooth > 0:
        i0 = ndi.gaussian_filter(i0, params.presmooth, mode="nearest")
        i1 = ndi.gaussian_filter(i1, params.presmooth, mode="nearest")
    pyr0 = _pyramid(i0, params)
    pyr1 = _pyramid(i1, params)
    u1 = np.zeros(pyr0[-1].shape)
    u2 = np.zeros(pyr0[-1].shape)
    for level in range(len(pyr0) - 1, -1, -1):
        if u1.shape != pyr0[level].shape:
            sy = pyr0[level].shape[0] / u1.shape[0]
            sx = pyr0[level].shape[1] / u1.shape[1]
            u1 = _resize(u1, pyr0[level].shape) * sx
            u2 = _resize(u2, pyr0[level].shape) * sy
        u1, u2 = _solve_level(pyr0[level], pyr1[level], u1, u2, params)
    return FlowField(u1.astype(np.float32), u2.astype(np.float32))
