"""Two-stage denoising pipeline from noisy CFA frames to finished RGB.

Stage 1 works on the packed mosaic in YUVW. A fraction ``alpha`` of the
noise it removed is returned, the mosaic is demosaicked, and stage 2 works
on RGB in YUV with its noise curve scaled by ``alpha``. Each stage runs a
temporal prefilter, a spatio-temporal patch denoiser, a partial noise return
``beta`` and a second identical denoising pass.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from rawden.color import YUV, YUVW, ColorTransform, IspParams, apply_early_isp, apply_finishing_isp
from rawden.demosaic import demosaic
from rawden.denoise import DenoiserParams, denoise_frame, multiscale_denoise
from rawden.errors import ConfigError, DimensionError, ParameterError
from rawden.flow import FlowField, FlowParams, reciprocity_mask, tvl1_flow, warp
from rawden.frames import CfaFrame, PackedFrame, RgbFrame, frame_data, pack_cfa, unpack_cfa, window_indices
from rawden.noise import NoiseModel, stage2_noise_curve, variance_map, local_noise_grid
from rawden.prefilter import PrefilterParams, prefilter_frame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlphaPolicy:
    """Pre-demosaic noise-return fraction as a function of ISO.

    Values are interpolated linearly in log-ISO and held constant outside
    the table.
    """

    table: tuple = ((3200, 0.5), (6400, 0.5), (12800, 0.5), (25600, 0.3))

    def __post_init__(self):
        iso = [float(i) for i, _ in self.table]
        alpha = [float(a) for _, a in self.table]
        if any(i <= 0 for i in iso) or sorted(iso) != iso or len(set(iso)) != len(iso):
            raise ParameterError("alpha policy ISOs must be positive and strictly increasing")
        if any(not 0 <= a <= 1 for a in alpha):
            raise ParameterError("alpha policy values must lie in [0, 1]")
        if any(b > a for a, b in zip(alpha, alpha[1:])):
            raise ParameterError("alpha policy must not increase with ISO")

    def __call__(self, iso: float) -> float:
        if iso <= 0:
            raise ParameterError(f"ISO must be positive, got {iso}")
        iso_pts = np.log([float(i) for i, _ in self.table])
        alpha = [float(a) for _, a in self.table]
        return float(np.interp(np.log(iso), iso_pts, alpha))


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float | None = None
    beta1: float = 0.3
    beta2: float = 0.3
    t_back: int = 1
    t_fwd: int = 1
    r: int = 7
    k: int = 66
    m: int = 98
    h: float = 8.75
    stride: int = 3
    search_radius: int = 18
    rho: int = 5
    tau1: tuple = (1.9, 2.2)  # (luma, chroma)
    tau2: tuple = ((3.0, 3.0), (1.0, 1.0), (0.6, 0.8))  # finest to coarsest
    scales: int = 3
    prefilter1: bool = True
    prefilter2: bool = True
    iterate1: bool = True
    iterate2: bool = True
    mp_trials: int = 1000
    seed: int = 0
    workers: int = 1
    variance_floor: float = 1e-6
    flow: FlowParams = field(default_factory=FlowParams)

    def __post_init__(self):
        tau2 = tuple(tuple(float(v) for v in s) for s in self.tau2)
        object.__setattr__(self, "tau1", tuple(float(v) for v in self.tau1))
        object.__setattr__(self, "tau2", tau2)
        for name in ("beta1", "beta2") + (("alpha",) if self.alpha is not None else ()):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")
        if self.t_back < 0 or self.t_fwd < 0:
            raise ParameterError("window radii must be nonnegative")
        if self.r < 2 or self.stride < 1 or self.k < 1 or self.m < 2 or self.workers < 1:
            raise ParameterError("r >= 2, m >= 2 and stride, k, workers >= 1 are required")
        if len(self.tau1) != 2 or any(len(s) != 2 for s in tau2):
            raise ParameterError("thresholds are (luma, chroma) pairs")
        if not 1 <= self.scales <= len(tau2):
            raise ParameterError(f"scales must be in 1..{len(tau2)}, got {self.scales}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        if "flow" in d:
            flow_names = {f.name for f in fields(FlowParams)}
            bad = set(d["flow"]) - flow_names
            if bad:
                raise ConfigError(f"unknown flow keys {sorted(bad)}")
            d["flow"] = FlowParams(**d["flow"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        from pathlib import Path

        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config {path}: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @property
    def window(self) -> int:
        return self.t_back + self.t_fwd + 1

    def prefilter_params(self) -> PrefilterParams:
        return PrefilterParams(
            r=self.r, stride=self.stride, h=self.h, rho=self.rho, mp_trials=self.mp_trials,
            seed=self.seed, variance_floor=self.variance_floor, workers=self.workers,
        )

    def denoiser_params(self) -> DenoiserParams:
        return DenoiserParams(
            r=self.r, k=self.k, m=self.m, stride=self.stride, search_radius=self.search_radius,
            variance_floor=self.variance_floor, workers=self.workers,
        )


def noise_return(noisy, denoised, fraction: float):
    """``denoised + fraction * (noisy - denoised)``, keeping the frame type of ``denoised``."""
    if not 0 <= fraction <= 1:
        raise ParameterError(f"noise-return fraction must lie in [0, 1], got {fraction}")
    a = np.asarray(frame_data(noisy), dtype=np.float64)
    b = np.asarray(frame_data(denoised), dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"noise return on mismatched shapes {a.shape} and {b.shape}")
    out = b + fraction * (a - b)
    if isinstance(denoised, CfaFrame):
        return CfaFrame(out, denoised.phase)
    if isinstance(denoised, (PackedFrame, RgbFrame)):
        return type(denoised)(out)
    return out


def _digest(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class StageSpec:
    """Everything one denoising stage needs besides its input."""

    transform: ColorTransform | None
    model: NoiseModel
    scales: tuple  # per untransformed channel
    taus: tuple  # per scale, per transformed channel
    multiscale: bool
    prefilter: bool
    iterate: bool
    beta: float


class MotionCache:
    """Flows and occlusion masks per ordered frame pair, keyed by content."""

    def __init__(self, params: FlowParams, store: dict | None = None):
        self.params = params
        self.store = {} if store is None else store

    def flow(self, src, dst) -> FlowField:
        key = ("flow", _digest(src, dst), self.params)
        if key not in self.store:
            self.store[key] = tvl1_flow(src, dst, self.params)
        return self.store[key]

    def align(self, luma, t, idx):
        """Flows and masks from frame ``t`` to each frame index in ``idx``."""
        flows, masks = [], []
        for j in idx:
            if j == t:
                flows.append(None)
                masks.append(np.zeros(luma[t].shape, dtype=bool))
                continue
            fwd = self.flow(luma[t], luma[j])
            bwd = self.flow(luma[j], luma[t])
            flows.append(fwd)
            masks.append(reciprocity_mask(fwd, bwd))
        return flows, np.stack(masks)


def _warped(seq, idx, flows):
    return np.stack([seq[j] if f is None else warp(seq[j], f) for j, f in zip(idx, flows)])


def _expand_tau(pair, channels):
    luma, chroma = pair
    return (luma,) + (chroma,) * (channels - 1)


def _stage_digest(config: PipelineConfig) -> str:
    # alpha only enters a stage through its noise model, and results do not depend on workers
    return replace(config, alpha=None, workers=1).digest()


def denoise_stage(sequence, spec: StageSpec, config: PipelineConfig, cache: dict | None = None) -> np.ndarray:
    """Denoise a whole ``(T, c, h, w)`` sequence in one colour domain.

    Returns the denoised sequence in the input channels. A zero noise model
    leaves the sequence untouched.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 4:
        raise DimensionError(f"stage input must be (T, c, h, w), got {seq.shape}")
    if spec.model.is_zero:
        return seq.copy()
    cache = {} if cache is None else cache
    key = ("stage", _digest(seq, spec.transform.matrix), replace(spec, transform=None), _stage_digest(config))
    if key in cache:
        return cache[key]
    n = seq.shape[0]
    z = spec.transform.forward(seq.transpose(1, 0, 2, 3)).transpose(1, 0, 2, 3)
    luma = z[:, 0]
    motion = MotionCache(config.flow, cache)
    windows = []
    for t in range(n):
        idx, ref = window_indices(t, n, config.t_back, config.t_fwd)
        flows, masks = motion.align(luma, t, idx)
        var = variance_map(seq[t], spec.model, spec.scales)
        windows.append((idx, ref, flows, masks, var))

    pre = z
    if spec.prefilter:
        params = config.prefilter_params()
        pre = np.empty_like(z)
        for t, (idx, ref, flows, masks, var) in enumerate(windows):
            grid = local_noise_grid(var, config.r, spec.transform.matrix, config.variance_floor)
            pre[t] = prefilter_frame(_warped(z, idx, flows), masks, ref, grid, params)

    def one_pass(src):
        params = config.denoiser_params()
        out = np.empty_like(src)
        for t, (idx, ref, flows, masks, var) in enumerate(windows):
            frames = _warped(src, idx, flows)
            if spec.multiscale:
                out[t] = multiscale_denoise(frames, masks, ref, var, spec.transform.matrix, spec.taus, params)
            else:
                grid = local_noise_grid(var, config.r, spec.transform.matrix, config.variance_floor)
                out[t] = denoise_frame(frames, masks, ref, grid, spec.taus[0], params)
        return out

    den = one_pass(pre)
    if spec.iterate:
        den = one_pass(den + spec.beta * (z - den))
    out = spec.transform.backward(den.transpose(1, 0, 2, 3)).transpose(1, 0, 2, 3)
    cache[key] = out
    return out


def resolve_alpha(config: PipelineConfig, model: NoiseModel, policy: AlphaPolicy | None = None) -> float:
    if config.alpha is not None:
        return float(config.alpha)
    if model.iso is None:
        raise ConfigError("alpha is unset and the noise model carries no ISO")
    return (policy or AlphaPolicy())(model.iso)


def isp_noise_model(model: NoiseModel, isp: IspParams) -> NoiseModel:
    """The sensor model with the white-balance gains as channel scales."""
    return replace(model, channel_scales=tuple(isp.wb_gains))


@dataclass
class PipelineResult:
    frames: list  # finished RgbFrame per input frame, values in [0, 1]
    linear: np.ndarray  # (T, 3, H, W) stage-2 output before finishing
    alpha: float
    runtime: float
    config_hash: str


def run_pipeline(
    frames,
    isp: IspParams,
    model: NoiseModel | None,
    config: PipelineConfig | None = None,
    cache: dict | None = None,
    policy: AlphaPolicy | None = None,
) -> PipelineResult:
    """Denoise, demosaic and finish a sequence of raw CFA frames.

    ``cache`` may be shared between calls; stage results and flows are
    reused whenever a stage sees the same input and settings again.
    """
    config = config or PipelineConfig()
    if model is None:
        raise ConfigError("a noise model is required")
    frames = list(frames)
    if not frames:
        raise DimensionError("empty sequence")
    if not all(isinstance(f, CfaFrame) for f in frames):
        raise DimensionError("pipeline input must be CFA frames")
    phase = frames[0].phase
    if {f.phase for f in frames} != {phase} or len({f.data.shape for f in frames}) != 1:
        raise DimensionError("all frames need the same phase and size")
    start = time.perf_counter()
    alpha = resolve_alpha(config, model, policy)
    model = isp_noise_model(model, isp)
    cache = {} if cache is None else cache

    early = [apply_early_isp(f, isp) for f in frames]
    packed = np.stack([pack_cfa(f).data for f in early]).astype(np.float64)
    if alpha < 1:
        spec1 = StageSpec(
            YUVW, model, model.channel_scales, (_expand_tau(config.tau1, 4),),
            False, config.prefilter1, config.iterate1, config.beta1,
        )
        stage1 = denoise_stage(packed, spec1, config, cache)
    else:
        stage1 = packed  # fully returned noise undoes stage 1
    rgb = []
    for f, den in zip(early, stage1):
        mosaic = noise_return(f, unpack_cfa(PackedFrame(den), phase), alpha)
        rgb.append(demosaic(mosaic).data)
    rgb = np.stack(rgb)

    model2 = stage2_noise_curve(model, alpha)
    taus = tuple(_expand_tau(t, 3) for t in config.tau2[: config.scales])
    spec2 = StageSpec(
        YUV, model2, model2.rgb_scales(), taus, True, config.prefilter2, config.iterate2, config.beta2
    )
    linear = denoise_stage(rgb, spec2, config, cache)
    out = [apply_finishing_isp(RgbFrame(x), isp) for x in linear]
    return PipelineResult(out, linear, alpha, time.perf_counter() - start, config.digest())


def demosaic_only(frames, isp: IspParams) -> list:
    """Early ISP, demosaic and finishing ISP with no denoising."""
    return [apply_finishing_isp(demosaic(apply_early_isp(f, isp)), isp) for f in frames]


def ablate(frames, clean, isp: IspParams, model: NoiseModel, runs, cache: dict | None = None, report=None):
    """Run the pipeline once per named config and score it against ``clean``.

    ``runs`` is a sequence of ``(name, PipelineConfig)``; ``clean`` holds
    finished reference frames. Returns one dict per run with PSNR, SSIM and
    MS-SSIM means, and writes them as CSV when ``report`` is a path.
    """
    from rawden.metrics import evaluate

    cache = {} if cache is None else cache
    rows = []
    for name, cfg in runs:
        res = run_pipeline(frames, isp, model, cfg, cache)
        m = evaluate([f.data * 65535.0 for f in res.frames], [frame_data(c) * 65535.0 for c in clean])
        rows.append(
            {
                "name": name,
                "alpha": res.alpha,
                "psnr": m.mean_psnr,
                "ssim": m.mean_ssim,
                "msssim": m.mean_msssim,
                "runtime": res.runtime,
                "config_hash": res.config_hash,
            }
        )
        log.info("%s: %.3f dB in %.1f s", name, m.mean_psnr, res.runtime)
    if report is not None:
        with open(report, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["name"])
            writer.writeheader()
            writer.writerows(rows)
    return rows
