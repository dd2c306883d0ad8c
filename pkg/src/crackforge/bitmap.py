"""Bitmap ingestion: IDX image files and PGM rasters.

Intensity grids feed the material generator: every pixel brighter than a
threshold seeds one candidate inclusion.  Only the unsigned-byte,
3-dimensional IDX variant (the image format used by the MNIST family) is
accepted; anything else is rejected up front.

Orientation convention: row 0 of a bitmap is the TOP of the physical
domain (y = 1), so rendered inclusion patterns match the visual
orientation of the source image.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX3_MAGIC = 0x00000803


class BadMagic(ValueError):
    """File does not start with the unsigned-byte 3-D IDX magic number."""


class Truncated(ValueError):
    """Payload is shorter than the header promises."""


@dataclass(frozen=True)
class IntensityGrid:
    """A single-channel 8-bit image, row-major, row 0 = top."""

    values: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.ndim != 2:
            raise ValueError("IntensityGrid needs a 2-D array")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def parse_idx(data: bytes) -> list[IntensityGrid]:
    """Decode an IDX3-ubyte byte sequence into a list of grids.

    Layout: big-endian magic 0x00000803, then counts (n, rows, cols),
    then n*rows*cols raw bytes in file order.

    Raises BadMagic for any other magic number (including the label-file
    magic 0x00000801) and Truncated when the payload is short.
    """
    if len(data) < 4:
        raise Truncated(f"need at least 4 bytes for the magic, got {len(data)}")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != IDX3_MAGIC:
        raise BadMagic(f"expected magic {IDX3_MAGIC:#010x}, got {magic:#010x}")
    if len(data) < 16:
        raise Truncated(f"header needs 16 bytes, got {len(data)}")
    n, rows, cols = struct.unpack_from(">III", data, 4)
    need = 16 + n * rows * cols
    if len(data) < need:
        raise Truncated(f"header promises {need} bytes, got {len(data)}")
    raw = np.frombuffer(data, dtype=np.uint8, count=n * rows * cols, offset=16)
    return [IntensityGrid(img) for img in raw.reshape(n, rows, cols)]


def serialize_idx(grids: list[IntensityGrid]) -> bytes:
    """Inverse of parse_idx; all grids must share one shape."""
    if not grids:
        raise ValueError("cannot serialize an empty grid list")
    rows, cols = grids[0].height, grids[0].width
    for g in grids:
        if (g.height, g.width) != (rows, cols):
            raise ValueError("all grids must have identical dimensions")
    header = struct.pack(">IIII", IDX3_MAGIC, len(grids), rows, cols)
    return header + b"".join(g.values.tobytes() for g in grids)


def active_pixels(grid: IntensityGrid, threshold: int = 10) -> list[tuple[int, int]]:
    """Pixels with intensity strictly greater than threshold, row-major."""
    rr, cc = np.nonzero(grid.values > threshold)
    return list(zip(rr.tolist(), cc.tolist()))


def read_pgm(data: bytes) -> IntensityGrid:
    """Parse a binary PGM (P5, maxval <= 255) into an IntensityGrid."""
    tokens = []
    pos = 0
    # header = 4 whitespace-separated tokens, '#' comments run to end of line
    while len(tokens) < 4:
        if pos >= len(data):
            raise Truncated("PGM header incomplete")
        ch = data[pos : pos + 1]
        if ch == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if tokens[0] != b"P5":
        raise BadMagic(f"expected P5, got {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if not 0 < maxval <= 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height
    if len(data) - pos < need:
        raise Truncated(f"PGM payload needs {need} bytes, got {len(data) - pos}")
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return IntensityGrid(raw.reshape(height, width))


def write_pgm(grid: IntensityGrid) -> bytes:
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + grid.values.tobytes()
