"""Readers and writers for the on-disk formats.

All binary formats are little-endian:

* ``EVS1`` events: magic, u32 W, u32 H, u64 count, then ``count`` packed
  records ``(u16 x, u16 y, i64 t_us, i8 p)``.
* ``MLG1`` mask logits: magic, u32 W, u32 H, then ``W*H`` f32 row-major.
* ``FLO1`` flow: magic, u32 W, u32 H, u64 dur_ref_us, then ``W*H`` pairs
  ``(f32 u, f32 v)`` row-major.
* ``ATC1`` attention weights: magic, u32 C, u32 heads, u64 seed, then f32
  row-major matrices in the order ``wq[0..h-1]``, ``wk[0..h-1]``,
  ``wv[0..h-1]`` (each ``C x C/h``) and ``wo`` (``C x C``).

Masks are binary PGM (P5) with 0 = ego and 255 = IMO.  Events also have a
CSV form with header ``x,y,t_us,p``.

Float payloads are stored as f32, so float64 arrays round-trip only to f32
precision.
"""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .atc import AttentionWeights
from .errors import FormatError
from .events import EventStream
from .flow import FlowField
from .suppression import IMOMask, MaskLogits

EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<i8"), ("p", "i1")])


def _read(path) -> bytes:
    return Path(path).read_bytes()


def _check_magic(buf: bytes, magic: bytes, path) -> None:
    if buf[:4] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} magic")


def _header(buf: bytes, fmt: str, path) -> tuple:
    if len(buf) < 4 + struct.calcsize(fmt):
        raise FormatError(f"{path}: truncated header")
    return struct.unpack_from(fmt, buf, 4)


def _payload(buf: bytes, offset: int, dtype, count: int, path) -> np.ndarray:
    need = offset + np.dtype(dtype).itemsize * count
    if len(buf) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset)


def write_events(path, stream: EventStream) -> None:
    if stream.width > 0xFFFF or stream.height > 0xFFFF:
        raise FormatError("EVS1 coordinates are limited to 16 bits")
    rec = np.empty(len(stream), dtype=EVENT_DTYPE)
    rec["x"], rec["y"], rec["t"], rec["p"] = stream.x, stream.y, stream.t, stream.p
    header = b"EVS1" + struct.pack("<IIQ", stream.width, stream.height, len(stream))
    Path(path).write_bytes(header + rec.tobytes())


def read_events(path) -> EventStream:
    buf = _read(path)
    _check_magic(buf, b"EVS1", path)
    w, h, n = _header(buf, "<IIQ", path)
    rec = _payload(buf, 20, EVENT_DTYPE, n, path)
    try:
        return EventStream(w, h, rec["x"], rec["y"], rec["t"], rec["p"])
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def write_events_csv(path, stream: EventStream) -> None:
    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow(["x", "y", "t_us", "p"])
        out.writerows(zip(stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist()))


def read_events_csv(path, width: int, height: int) -> EventStream:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y", "t_us", "p"]:
        raise FormatError(f"{path}: expected header x,y,t_us,p")
    try:
        cols = np.array(rows[1:], dtype=np.int64).reshape(-1, 4)
        return EventStream(width, height, cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3])
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def write_pgm(path, mask: IMOMask) -> None:
    h, w = mask.shape
    data = np.where(mask.values, 255, 0).astype(np.uint8)
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


def read_pgm(path) -> IMOMask:
    """Read a P5 mask; any non-zero sample counts as IMO."""
    buf = _read(path)
    f = io.BytesIO(buf)
    tokens = []
    while len(tokens) < 4:
        line = f.readline()
        if not line:
            raise FormatError(f"{path}: truncated PGM header")
        tokens += line.split(b"#")[0].split()
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5)")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise FormatError(f"{path}: bad PGM header") from e
    if maxval > 255:
        raise FormatError(f"{path}: 16-bit PGM is not supported")
    data = _payload(buf, f.tell(), np.uint8, w * h, path)
    return IMOMask(data.reshape(h, w) > 0)


def write_logits(path, logits: MaskLogits) -> None:
    h, w = logits.shape
    Path(path).write_bytes(b"MLG1" + struct.pack("<II", w, h) + logits.values.astype("<f4").tobytes())


def read_logits(path) -> MaskLogits:
    buf = _read(path)
    _check_magic(buf, b"MLG1", path)
    w, h = _header(buf, "<II", path)
    return MaskLogits(_payload(buf, 12, "<f4", w * h, path).reshape(h, w).astype(np.float64))


def write_flow(path, flow: FlowField) -> None:
    h, w = flow.shape
    uv = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    Path(path).write_bytes(b"FLO1" + struct.pack("<IIQ", w, h, flow.dur_ref) + uv.tobytes())


def read_flow(path) -> FlowField:
    buf = _read(path)
    _check_magic(buf, b"FLO1", path)
    w, h, dur = _header(buf, "<IIQ", path)
    uv = _payload(buf, 20, "<f4", 2 * w * h, path).reshape(h, w, 2).astype(np.float64)
    try:
        return FlowField(uv[..., 0], uv[..., 1], dur)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def write_weights(path, w: AttentionWeights) -> None:
    parts = [b"ATC1", struct.pack("<IIQ", w.channels, w.heads, w.seed)]
    for name in ("wq", "wk", "wv"):
        parts.extend(m.astype("<f4").tobytes() for m in getattr(w, name))
    parts.append(w.wo.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_weights(path) -> AttentionWeights:
    buf = _read(path)
    _check_magic(buf, b"ATC1", path)
    c, h, seed = _header(buf, "<IIQ", path)
    if h == 0 or c % h:
        raise FormatError(f"{path}: channels {c} not divisible by heads {h}")
    dk = c // h
    flat = _payload(buf, 20, "<f4", 3 * h * c * dk + c * c, path).astype(np.float64)
    n = h * c * dk
    q, k, v = (flat[i * n:(i + 1) * n].reshape(h, c, dk) for i in range(3))
    return AttentionWeights(q, k, v, flat[3 * n:].reshape(c, c), seed)
