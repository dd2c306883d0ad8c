"""Field rasterization, damage binarization, and spline differentiation.

Rasters follow one convention everywhere: value (i, j) lives at the cell
center ((j + 0.5)/n, 1 - (i + 0.5)/n), so row 0 is the top of the domain.

The on-disk raster container is 8-byte magic "CRKFRG01", little-endian
u32 resolution n, u8 dtype tag (0 = float64, 1 = uint8), then the n*n
row-major payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .mesh import Mesh, interpolate_many

RASTER_MAGIC = b"CRKFRG01"
_DTYPE_F64 = 0
_DTYPE_U8 = 1


class TooFewSamples(ValueError):
    """Cubic splines need at least 4 samples per line."""


@dataclass(frozen=True)
class FieldRaster:
    channel: str
    values: np.ndarray  # (n, n), row 0 = top

    @property
    def n(self) -> int:
        return self.values.shape[0]


def cell_centers(n: int) -> np.ndarray:
    """(n*n, 2) physical coordinates in raster order (row 0 = top)."""
    jj, ii = np.meshgrid(np.arange(n), np.arange(n))
    return np.column_stack([((jj + 0.5) / n).ravel(),
                            (1.0 - (ii + 0.5) / n).ravel()])


def sample_to_raster(mesh: Mesh, nodal: np.ndarray, n: int,
                     channel: str = "field") -> FieldRaster:
    """P1-interpolate a nodal field at the n x n cell centers."""
    if n < 1:
        raise ValueError("raster resolution must be >= 1")
    vals = interpolate_many(mesh, nodal, cell_centers(n)).reshape(n, n)
    return FieldRaster(channel=channel, values=vals)


def binarize(raster: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where the value is strictly above threshold, else 0 (uint8)."""
    v = np.asarray(raster, dtype=np.float64)
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError("binarize expects values in [0, 1]")
    return (v > threshold).astype(np.uint8)


def spline_derivative(grid: np.ndarray, spacing: float, axis: str = "x",
                      bc_type: str = "natural") -> np.ndarray:
    """First derivative of a gridded field along one axis via cubic splines.

    Each line of samples (a raster row for axis="x", a column for
    axis="y") is interpolated with a cubic spline over the cell-center
    coordinates and differentiated analytically at those same centers.
    Natural (zero second derivative) end conditions by default; the two
    ends of each line carry the usual natural-spline boundary error.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError("grid must be 2-D")
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    npts = g.shape[1] if axis == "x" else g.shape[0]
    if npts < 4:
        raise TooFewSamples(f"need >= 4 samples along {axis}, got {npts}")
    coords = (np.arange(npts) + 0.5) * spacing
    if axis == "x":
        cs = CubicSpline(coords, g, axis=1, bc_type=bc_type)
        return cs.derivative()(coords)
    # raster rows run top-down: row i sits at decreasing y, so flip to get
    # ascending coordinates, differentiate, and flip back
    cs = CubicSpline(coords, g[::-1, :], axis=0, bc_type=bc_type)
    return cs.derivative()(coords)[::-1, :]


def deformation_gradient(u_grid: np.ndarray, spacing: float, axis: str = "x",
                         bc_type: str = "natural") -> np.ndarray:
    """Diagonal deformation-gradient component: 1 + du/daxis.

    For a horizontal displacement raster differentiated along x this is
    F11; for a vertical one along y it is F22.
    """
    return 1.0 + spline_derivative(u_grid, spacing, axis, bc_type)


def write_raster(values: np.ndarray) -> bytes:
    """Serialize a square raster into the CRKFRG01 container."""
    v = np.asarray(values)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("raster container stores square rasters only")
    if v.dtype == np.uint8:
        tag, payload = _DTYPE_U8, v.tobytes()
    else:
        tag, payload = _DTYPE_F64, v.astype("<f8").tobytes()
    return RASTER_MAGIC + struct.pack("<IB", v.shape[0], tag) + payload


def read_raster(data: bytes) -> np.ndarray:
    if data[:8] != RASTER_MAGIC:
        raise ValueError(f"bad raster magic {data[:8]!r}")
    n, tag = struct.unpack_from("<IB", data, 8)
    offset = 8 + 5
    if tag == _DTYPE_F64:
        need = n * n * 8
        if len(data) - offset < need:
            raise ValueError("raster payload truncated")
        return np.frombuffer(data, dtype="<f8", count=n * n, offset=offset).reshape(n, n).copy()
    if tag == _DTYPE_U8:
        need = n * n
        if len(data) - offset < need:
            raise ValueError("raster payload truncated")
        return np.frombuffer(data, dtype=np.uint8, count=n * n, offset=offset).reshape(n, n).copy()
    raise ValueError(f"unknown raster dtype tag {tag}")


def curve_to_csv(curve: np.ndarray) -> str:
    """Force-displacement samples as bare 'displacement,force' rows."""
    return "".join(f"{d:.17g},{f:.17g}\n" for d, f in np.asarray(curve))


def curve_from_csv(text: str) -> np.ndarray:
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    return np.array([[float(a), float(b)] for a, b in rows]).reshape(-1, 2)


def raster_to_csv(values: np.ndarray) -> str:
    return "\n".join(",".join(f"{v:.17g}" for v in row) for row in np.asarray(values)) + "\n"
