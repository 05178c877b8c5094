"""Frame files: 16-bit netpbm, float-plane containers and JSON sidecars."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rawden.errors import ConfigError, FormatError
from rawden.frames import CfaFrame, PackedFrame, RgbFrame, site_offsets

RDF_MAGIC = b"RDF1"
_RDF_HEADER = struct.Struct("<4sIII")
_WHITESPACE = b" \t\r\n\v\f"


def _parse_netpbm_header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    """Return magic, width, height, maxval and the payload offset."""
    if len(buf) < 2:
        raise FormatError("file too short for a netpbm header", 0)
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported netpbm magic {magic!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(buf) and (buf[pos] in _WHITESPACE or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                end = buf.find(b"\n", pos)
                pos = len(buf) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(buf) and buf[pos] not in _WHITESPACE and buf[pos] != ord("#"):
            pos += 1
        token = buf[start:pos]
        if not token:
            raise FormatError("truncated netpbm header", start)
        if not token.isdigit():
            raise FormatError(f"malformed header field {token!r}", start)
        fields.append((int(token), start))
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise FormatError("missing whitespace after maxval", pos)
    (width, _), (height, _), (maxval, mpos) = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid dimensions {width}x{height}", fields[0][1])
    if maxval != 65535:
        raise FormatError(f"maxval must be 65535, got {maxval}", mpos)
    return magic, width, height, maxval, pos + 1


def read_netpbm(path) -> np.ndarray:
    """Read a 16-bit P5/P6 file into a uint16 array, ``(h, w)`` or ``(3, h, w)``."""
    buf = Path(path).read_bytes()
    magic, width, height, _, offset = _parse_netpbm_header(buf)
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels * 2
    if len(buf) - offset < n:
        raise FormatError(f"truncated payload: need {n} bytes, have {len(buf) - offset}", len(buf))
    data = np.frombuffer(buf, dtype=">u2", count=n // 2, offset=offset).astype(np.uint16)
    if channels == 1:
        return data.reshape(height, width)
    return data.reshape(height, width, 3).transpose(2, 0, 1).copy()


def to_uint16(data) -> np.ndarray:
    data = np.asarray(data)
    if data.dtype == np.uint16:
        return data
    return np.clip(np.rint(data), 0, 65535).astype(np.uint16)


def write_netpbm(path, data) -> None:
    data = to_uint16(data)
    if data.ndim == 2:
        magic, (h, w), payload = b"P5", data.shape, data
    elif data.ndim == 3 and data.shape[0] == 3:
        magic, (h, w), payload = b"P6", data.shape[1:], data.transpose(1, 2, 0)
    else:
        raise FormatError(f"cannot store array of shape {data.shape} as netpbm")
    header = magic + b"\n%d %d\n65535\n" % (w, h)
    Path(path).write_bytes(header + payload.astype(">u2").tobytes())


def write_planes(path, planes) -> None:
    """Write a ``(c, h, w)`` float array as an RDF1 float-plane container."""
    planes = np.asarray(planes, dtype="<f4")
    if planes.ndim == 2:
        planes = planes[None]
    c, h, w = planes.shape
    Path(path).write_bytes(_RDF_HEADER.pack(RDF_MAGIC, w, h, c) + planes.tobytes())


def read_planes(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < _RDF_HEADER.size:
        raise FormatError("truncated float-plane header", len(buf))
    magic, w, h, c = _RDF_HEADER.unpack_from(buf)
    if magic != RDF_MAGIC:
        raise FormatError(f"bad float-plane magic {magic!r}", 0)
    n = w * h * c * 4
    if len(buf) - _RDF_HEADER.size < n:
        raise FormatError(f"truncated payload: need {n} bytes", len(buf))
    data = np.frombuffer(buf, dtype="<f4", count=w * h * c, offset=_RDF_HEADER.size)
    return data.reshape(c, h, w).astype(np.float32)


def read_frame(path, phase: str = "RGGB"):
    """Read a frame, choosing the container by content.

    P5 gives a :class:`CfaFrame`, P6 an :class:`RgbFrame`. Float-plane files
    give a frame matching their channel count (1, 3 or 4 planes).
    """
    path = Path(path)
    head = path.read_bytes()[:4]
    if head == RDF_MAGIC:
        planes = read_planes(path)
        if planes.shape[0] == 1:
            return CfaFrame(planes[0], phase)
        if planes.shape[0] == 3:
            return RgbFrame(planes)
        if planes.shape[0] == 4:
            return PackedFrame(planes)
        raise FormatError(f"no frame type has {planes.shape[0]} channels", 12)
    data = read_netpbm(path)
    if data.ndim == 2:
        return CfaFrame(data, phase)
    return RgbFrame(data)


def write_frame(path, frame) -> None:
    """Write ``frame``; ``.rdf`` paths get float planes, anything else netpbm."""
    path = Path(path)
    if path.suffix.lower() == ".rdf":
        write_planes(path, frame.data)
    elif isinstance(frame, PackedFrame):
        raise FormatError("packed frames can only be stored as .rdf float planes")
    else:
        write_netpbm(path, frame.data)


@dataclass
class Sidecar:
    """Per-sequence metadata stored next to the frames."""

    phase: str = "RGGB"
    black_level: float = 0.0
    wb_gains: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    iso: float | None = None
    white_level: float = 65535.0
    ccm: list | None = None
    gamma: float = 2.2
    noise: dict | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Sidecar":
        missing = {"phase", "black_level", "wb_gains"} - d.keys()
        if missing:
            raise ConfigError(f"sidecar lacks required keys {sorted(missing)}")
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        sc = cls(**known)
        site_offsets(sc.phase)
        if len(sc.wb_gains) != 4 or min(sc.wb_gains) <= 0:
            raise ConfigError("wb_gains must be 4 positive numbers")
        return sc

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def isp(self):
        from rawden.color import IspParams

        kwargs = {"ccm": tuple(map(tuple, self.ccm))} if self.ccm is not None else {}
        return IspParams(self.black_level, tuple(self.wb_gains), gamma=self.gamma, white_level=self.white_level, **kwargs)

    def noise_model(self):
        """The sensor noise model: explicit ``a``/``b``, or calibration anchors read at ``iso``."""
        from rawden.noise import IsoCalibration, NoiseModel, interpolate_iso

        if not self.noise:
            raise ConfigError("sidecar has no noise model")
        gains = tuple(self.wb_gains)
        if "anchors" in self.noise:
            if self.iso is None:
                raise ConfigError("calibration anchors need the sidecar ISO")
            calib = IsoCalibration.from_dict({"offset": self.black_level, "wb_gains": gains} | self.noise)
            return interpolate_iso(calib, self.iso)
        try:
            a, b = float(self.noise["a"]), float(self.noise["b"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("sidecar noise needs numeric 'a' and 'b' or 'anchors'") from None
        return NoiseModel(a, b, self.black_level, gains, self.iso)


def read_sidecar(path) -> Sidecar:
    try:
        return Sidecar.from_dict(json.loads(Path(path).read_text()))
    except FileNotFoundError:
        raise ConfigError(f"sidecar {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sidecar {path}: {exc}") from None


def write_sidecar(path, sidecar: Sidecar) -> None:
    Path(path).write_text(json.dumps(sidecar.to_dict(), indent=2))


def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".pgm", ".ppm", ".rdf"))
    if not files:
        raise FileNotFoundError(f"no frames in {directory}")
    return files
