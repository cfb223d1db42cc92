"""PNG and Middlebury .flo readers/writers.

PNG frames are 8-bit; floats convert by v/255 on read and round(v*255) with
clamping on write. Occlusion masks serialize as 8-bit grayscale {0, 255}.
Energy maps have two containers: a raw little-endian float32 plane (exact)
and a 16-bit PNG with fixed-point scaling ENERGY_PNG_SCALE counts per unit
of density (lossy but portable).

The .flo layout is the Middlebury one: 4-byte little-endian float magic
202021.25 ("PIEH"), int32 width, int32 height, then width*height*2 float32
interleaved (u, v) row-major. Round trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .core import EnergyMap, Frame, FlowDirection, FlowField, OcclusionMap

__all__ = [
    "DataError",
    "read_frame_png",
    "write_frame_png",
    "read_flo",
    "write_flo",
    "read_mask_png",
    "write_mask_png",
    "read_energy_raw",
    "write_energy_raw",
    "write_energy_png16",
    "read_energy_png16",
    "ENERGY_PNG_SCALE",
]

FLO_MAGIC = 202021.25
ENERGY_RAW_MAGIC = b"EMAP"
# 16-bit PNG fixed point: density 1.0 -> 4096 counts, saturating at 65535/4096 = 15.99...
ENERGY_PNG_SCALE = 4096.0


class DataError(Exception):
    """Malformed or inconsistent input data (maps to CLI exit code 2)."""


def write_frame_png(frame: Frame, path) -> None:
    q = np.clip(np.rint(frame.data * 255.0), 0, 255).astype(np.uint8)
    if q.shape[2] == 1:
        img = Image.fromarray(q[:, :, 0], mode="L")
    else:
        img = Image.fromarray(q, mode="RGB")
    img.save(path, format="PNG")


def read_frame_png(path) -> Frame:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as e:
        raise DataError(f"cannot read PNG {path}: {e}") from e
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if ("A" in img.mode or len(img.getbands()) > 1) else "L")
    a = np.asarray(img, dtype=np.float64) / 255.0
    return Frame(a)


def write_flo(flow: FlowField, path) -> None:
    h, w = flow.height, flow.width
    header = struct.pack("<fii", FLO_MAGIC, w, h)
    body = flow.vectors.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(body)


def read_flo(path, direction: FlowDirection = FlowDirection.BACKWARD) -> FlowField:
    """Read a .flo file. Direction is not stored in the format, so the caller
    declares the tag; the CLI treats files as backward (warp-ready) by default.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise DataError(f"{path}: truncated .flo header")
    magic, w, h = struct.unpack_from("<fii", raw, 0)
    if magic != FLO_MAGIC:
        raise DataError(f"{path}: bad .flo magic {magic!r}")
    expected = 12 + 8 * w * h
    if w <= 0 or h <= 0 or len(raw) != expected:
        raise DataError(f"{path}: bad .flo dimensions or size ({w}x{h}, {len(raw)} bytes)")
    vec = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w, 2)
    return FlowField(vec, direction)


def write_mask_png(mask: OcclusionMap, path) -> None:
    q = (mask.mask * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")


def read_mask_png(path) -> OcclusionMap:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as e:
        raise DataError(f"cannot read PNG {path}: {e}") from e
    a = np.asarray(img.convert("L"), dtype=np.float64)
    vals = np.unique(a)
    if not np.isin(vals, (0.0, 255.0)).all():
        raise DataError(f"{path}: mask PNG must contain only 0 and 255, found {vals[:8]}")
    return OcclusionMap(a / 255.0)


def write_energy_raw(energy: EnergyMap, path) -> None:
    with open(path, "wb") as f:
        f.write(ENERGY_RAW_MAGIC)
        f.write(struct.pack("<ii", energy.width, energy.height))
        f.write(energy.density.astype("<f4").tobytes())


def read_energy_raw(path) -> EnergyMap:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != ENERGY_RAW_MAGIC:
        raise DataError(f"{path}: not a raw energy plane")
    w, h = struct.unpack_from("<ii", raw, 4)
    if w <= 0 or h <= 0 or len(raw) != 12 + 4 * w * h:
        raise DataError(f"{path}: bad energy dimensions or size")
    d = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w)
    return EnergyMap(d)


def write_energy_png16(energy: EnergyMap, path) -> None:
    q = np.clip(np.rint(energy.density * ENERGY_PNG_SCALE), 0, 65535).astype("<u2")
    Image.fromarray(q, mode="I;16").save(path, format="PNG")


def read_energy_png16(path) -> EnergyMap:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as e:
        raise DataError(f"cannot read PNG {path}: {e}") from e
    a = np.asarray(img, dtype=np.float64)
    return EnergyMap(a / ENERGY_PNG_SCALE)
