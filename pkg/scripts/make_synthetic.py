"""Write the synthetic test sequence to disk.

Produces, under ``--out``::

    clean/   16-bit CFA frames with black level (PGM)
    ref/     finished sRGB references (16-bit PPM)
    <level>/ noisy CFA frames plus meta.json for each noise level
    meta.json  sidecar for the clean frames

The directories feed straight into ``rawden denoise``, ``ablate`` and ``metrics``.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from rawden.color import quantize16
from rawden.io import write_netpbm
from rawden.synthetic import BLACK_LEVEL, NOISE_LEVELS, WB_GAINS, WHITE_LEVEL, make_sequence, noise_model


def sidecar(iso=None, noise=None) -> dict:
    d = {"phase": "RGGB", "black_level": BLACK_LEVEL, "white_level": WHITE_LEVEL, "wb_gains": list(WB_GAINS)}
    if iso is not None:
        d["iso"] = iso
    if noise is not None:
        d["noise"] = noise
    return d


def to_adu(data) -> np.ndarray:
    return np.clip(np.rint(data), 0, 65535).astype(np.uint16)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="data/synthetic")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0, help="scene seed")
    p.add_argument("--noise-seed", type=int, default=1)
    args = p.parse_args(argv)

    out = Path(args.out)
    seq = make_sequence(args.frames, args.size, args.seed)
    for sub in ("clean", "ref"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for t, (cfa, ref) in enumerate(zip(seq.sensor(), seq.reference())):
        write_netpbm(out / "clean" / f"frame_{t:04d}.pgm", to_adu(cfa.data + BLACK_LEVEL))
        write_netpbm(out / "ref" / f"frame_{t:04d}.ppm", quantize16(ref))
    (out / "meta.json").write_text(json.dumps(sidecar(), indent=2))

    for level, (iso, a, b) in NOISE_LEVELS.items():
        d = out / level
        d.mkdir(exist_ok=True)
        for t, f in enumerate(seq.noisy(noise_model(level), args.noise_seed)):
            write_netpbm(d / f"frame_{t:04d}.pgm", to_adu(f.data))
        (d / "meta.json").write_text(json.dumps(sidecar(iso, {"a": a, "b": b}), indent=2))
    print(f"wrote {args.frames} frames of {args.size}x{args.size} to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
