"""``rawden`` command line: denoise, inject, ablate, demosaic and metrics."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from rawden.color import apply_early_isp, apply_finishing_isp, quantize16
from rawden.demosaic import demosaic
from rawden.errors import ConfigError, DimensionError, FormatError, RawdenError
from rawden.frames import CfaFrame, RgbFrame
from rawden.io import Sidecar, list_frames, read_frame, read_sidecar, write_frame, write_netpbm, write_sidecar

log = logging.getLogger("rawden")


def _load_config(path, overrides: dict):
    from rawden.pipeline import PipelineConfig

    base = {}
    if path:
        try:
            base = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config {path}: {exc}") from None
    base.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(base)


def _read_cfa(directory, phase) -> list:
    frames = [read_frame(p, phase) for p in list_frames(directory)]
    if not all(isinstance(f, CfaFrame) for f in frames):
        raise DimensionError(f"{directory} must hold single-channel CFA frames")
    return frames


def _read_rgb(directory) -> list:
    frames = [read_frame(p) for p in list_frames(directory)]
    if not all(isinstance(f, RgbFrame) for f in frames):
        raise DimensionError(f"{directory} must hold RGB frames")
    return frames


def _write_rgb(directory, frames) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for t, f in enumerate(frames):
        write_netpbm(out / f"frame_{t:04d}.ppm", quantize16(f))


def cmd_denoise(args) -> int:
    from rawden.pipeline import run_pipeline

    sc = read_sidecar(args.sidecar)
    config = _load_config(args.config, {"alpha": args.alpha, "workers": args.workers})
    frames = _read_cfa(args.input, sc.phase)
    result = run_pipeline(frames, sc.isp(), sc.noise_model(), config)
    _write_rgb(args.out, result.frames)
    log.info("denoised %d frames with alpha=%.2f in %.1f s", len(frames), result.alpha, result.runtime)
    return 0


def cmd_inject(args) -> int:
    from rawden.noise import IsoCalibration, NoiseModel, inject_noise, interpolate_iso

    sc = read_sidecar(args.sidecar)
    if args.calibration:
        model = interpolate_iso(IsoCalibration.load(args.calibration), args.iso)
    else:
        model = Sidecar.from_dict(sc.to_dict() | {"iso": args.iso}).noise_model()
    model = NoiseModel(model.a, model.b, sc.black_level, tuple(sc.wb_gains), args.iso)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t, path in enumerate(list_frames(args.input)):
        clean = read_frame(path, sc.phase)
        if not isinstance(clean, CfaFrame):
            raise DimensionError(f"{path} is not a CFA frame")
        signal = np.maximum(np.asarray(clean.data, dtype=np.float64) - sc.black_level, 0.0)
        noisy = inject_noise(signal, model, args.seed, t)
        write_netpbm(out / f"frame_{t:04d}.pgm", noisy)
    meta = sc.to_dict() | {"noise": {"a": model.a, "b": model.b}, "iso": args.iso}
    write_sidecar(out / "meta.json", Sidecar.from_dict(meta))
    return 0


def cmd_ablate(args) -> int:
    from rawden.pipeline import ablate

    sc = read_sidecar(args.sidecar)
    try:
        grid = json.loads(Path(args.grid).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"grid {args.grid}: {exc}") from None
    if not isinstance(grid, dict) or not isinstance(grid.get("runs"), list):
        raise ConfigError("grid must be an object with a 'runs' list")
    base = grid.get("base", {})
    runs = []
    for i, run in enumerate(grid["runs"]):
        run = dict(run)
        name = str(run.pop("name", f"run{i}"))
        runs.append((name, _load_config(None, base | run | ({"workers": args.workers} if args.workers else {}))))
    frames = _read_cfa(args.input, sc.phase)
    clean = [np.asarray(f.data, dtype=np.float64) / 65535.0 for f in _read_rgb(args.clean)]
    rows = ablate(frames, clean, sc.isp(), sc.noise_model(), runs, report=args.report)
    for row in rows:
        print(f"{row['name']}: PSNR {row['psnr']:.3f} dB  SSIM {row['ssim']:.4f}  MS-SSIM {row['msssim']:.4f}")
    return 0


def cmd_demosaic(args) -> int:
    sc = read_sidecar(args.sidecar) if args.sidecar else Sidecar(phase=args.phase)
    frames = _read_cfa(args.input, sc.phase)
    isp = sc.isp()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t, f in enumerate(frames):
        rgb = demosaic(apply_early_isp(f, isp))
        if args.linear:
            write_frame(out / f"frame_{t:04d}.rdf", rgb)
        else:
            write_netpbm(out / f"frame_{t:04d}.ppm", quantize16(apply_finishing_isp(rgb, isp)))
    return 0


def cmd_metrics(args) -> int:
    from rawden.metrics import evaluate

    ref = _read_rgb(args.ref)
    test = _read_rgb(args.test)
    report = evaluate([f.data for f in test], [f.data for f in ref], peak=65535.0)
    if args.report:
        report.write_csv(args.report)
    if args.summary:
        report.write_json(args.summary)
    s = report.summary()
    print(f"PSNR {s['psnr']:.3f} dB  SSIM {s['ssim']:.4f}  MS-SSIM {s['msssim']:.4f}  ({s['frames']} frames)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rawden", description="Two-stage RAW video denoiser")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("denoise", help="denoise a CFA sequence into finished RGB")
    d.add_argument("--in", dest="input", required=True, help="directory of 16-bit PGM CFA frames")
    d.add_argument("--sidecar", required=True, help="JSON metadata with ISP and noise parameters")
    d.add_argument("--config", help="JSON pipeline config")
    d.add_argument("--out", required=True)
    d.add_argument("--alpha", type=float)
    d.add_argument("--workers", type=int)
    d.set_defaults(func=cmd_denoise)

    i = sub.add_parser("inject", help="add calibrated sensor noise to clean CFA frames")
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--sidecar", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--iso", type=float, required=True)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--calibration", help="JSON with ISO anchors")
    i.set_defaults(func=cmd_inject)

    a = sub.add_parser("ablate", help="score a grid of pipeline configs against clean frames")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--sidecar", required=True)
    a.add_argument("--grid", required=True)
    a.add_argument("--clean", required=True, help="directory of finished 16-bit PPM references")
    a.add_argument("--report", required=True)
    a.add_argument("--workers", type=int)
    a.set_defaults(func=cmd_ablate)

    m = sub.add_parser("demosaic", help="demosaic without denoising")
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--sidecar")
    m.add_argument("--phase", default="RGGB")
    m.add_argument("--linear", action="store_true", help="write linear float planes, skipping the finishing ISP")
    m.set_defaults(func=cmd_demosaic)

    q = sub.add_parser("metrics", help="PSNR/SSIM/MS-SSIM between two RGB sequences")
    q.add_argument("--ref", required=True)
    q.add_argument("--test", required=True)
    q.add_argument("--report", help="per-frame CSV")
    q.add_argument("--summary", help="JSON summary")
    q.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except RawdenError as exc:
        print(f"rawden: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"rawden: {exc}", file=sys.stderr)
        return FormatError.exit_code
    except OSError as exc:
        print(f"rawden: {exc}", file=sys.stderr)
        return FormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
