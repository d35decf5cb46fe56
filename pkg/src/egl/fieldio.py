"""On-disk formats: EGL1 binary fields, PGM previews, CSV tables."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .spectral import GridField

MAGIC = b"EGL1"
# magic, N, reserved word, then 4 zero bytes of padding to a 16-byte header
_HEADER = struct.Struct("<4sII4x")


def write_field(path, f: GridField) -> None:
    """16-byte header (magic, u32 N, u32 reserved, padding) then N*N little-endian f64."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, f.n, 0))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path) -> GridField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, _ = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * n * n:
        raise ValueError(f"{path}: expected {8 * n * n} payload bytes, found {len(body)}")
    return GridField(np.frombuffer(body, dtype="<f8").reshape(n, n))


def write_pgm(path, f: GridField) -> None:
    """Binary P5 graymap, linearly rescaled to 0..255.  Row 0 is y = 0."""
    v = f.values
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo if hi > lo else 1.0
    img = np.round((v - lo) / span * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{f.n} {f.n}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:] if ln]
