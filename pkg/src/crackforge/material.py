"""Heterogeneous material generation: inclusion placement and the rigidity field.

A bitmap seeds circular inclusions: every pixel above an intensity
threshold contributes one candidate center, drawn uniformly inside a
centered subregion of that pixel, subject to a minimum center-to-center
distance enforced by rejection sampling.

Around the inclusions, Young's modulus, fracture toughness, and failure
strength are all scaled by a common rigidity ratio

    r(x) = 1 + 3                                  if d < d_min
    r(x) = 1 + 3 d_min^2 / (beta d_min^2 + (1 - beta) d^2)   otherwise

where d is a smooth minimum over the distances from x to all inclusion
centers.  r is continuous at d = d_min and decays toward 1 far from all
inclusions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bitmap import IntensityGrid, active_pixels


class EmptyInput(ValueError):
    """Smooth minimum of an empty value set is undefined."""


class NoInclusions(ValueError):
    """Rigidity ratio queried on a field with no inclusion centers."""


# Background constitutive values: Young's modulus, fracture toughness,
# failure strength (consistent stress / energy-release units).
BACKGROUND_E0 = 210000.0
BACKGROUND_GF = 2.7
BACKGROUND_FT = 2445.42


@dataclass(frozen=True)
class MaterialGenParams:
    """Controls for bitmap-driven inclusion placement."""

    pixel_subregion_fraction: float = 0.6
    min_center_distance: float = 0.0525
    intensity_threshold: int = 10
    max_rejection_attempts: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.pixel_subregion_fraction <= 1.0:
            raise ValueError("pixel_subregion_fraction must be in (0, 1]")
        if self.min_center_distance <= 0.0:
            raise ValueError("min_center_distance must be positive")


@dataclass(frozen=True)
class MaterialField:
    """Inclusion centers plus the parameters of the rigidity-ratio field."""

    centers: np.ndarray  # (n, 2) points in [0,1]^2; may be empty
    alpha_smoothmin: float = -100.0
    beta: float = 0.9
    d_min: float = 0.0075
    ratio_cap: float = 3.0
    e0: float = BACKGROUND_E0
    gf: float = BACKGROUND_GF
    ft: float = BACKGROUND_FT
    skipped_pixels: tuple = field(default=())  # (row, col) pixels dropped by rejection sampling

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "centers", c)

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]


def homogeneous_field(e0: float = BACKGROUND_E0, gf: float = BACKGROUND_GF,
                      ft: float = BACKGROUND_FT) -> MaterialField:
    return MaterialField(centers=np.empty((0, 2)), e0=e0, gf=gf, ft=ft)


def smooth_min(values, alpha: float) -> float:
    """Exponentially weighted soft minimum, sum(x*exp(a*x)) / sum(exp(a*x)).

    alpha < 0; the limit alpha -> -inf recovers min(values).  Exponents are
    shifted by alpha*min(values) before exponentiation so nothing overflows
    however large alpha*x gets.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptyInput("smooth_min needs at least one value")
    if alpha >= 0:
        raise ValueError("smooth_min requires alpha < 0")
    m = v.min()
    w = np.exp(alpha * (v - m))
    return float((v * w).sum() / w.sum())


def _smooth_min_rows(dist: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise stabilized smooth minimum of a (npts, ncenters) matrix."""
    m = dist.min(axis=1, keepdims=True)
    w = np.exp(alpha * (dist - m))
    return (dist * w).sum(axis=1) / w.sum(axis=1)


def _ratio_from_distance(d: np.ndarray, fld: MaterialField) -> np.ndarray:
    dm2 = fld.d_min * fld.d_min
    far = fld.ratio_cap * dm2 / (fld.beta * dm2 + (1.0 - fld.beta) * d * d)
    return 1.0 + np.where(d < fld.d_min, fld.ratio_cap, far)


def rigidity_ratio(x, fld: MaterialField) -> float:
    """Rigidity ratio at one point; raises NoInclusions on an empty field."""
    if fld.n_centers == 0:
        raise NoInclusions("field has no inclusion centers")
    p = np.asarray(x, dtype=np.float64)
    d = smooth_min(np.hypot(*(p - fld.centers).T), fld.alpha_smoothmin)
    return float(_ratio_from_distance(np.asarray(d), fld))


def rigidity_ratio_many(points: np.ndarray, fld: MaterialField,
                        chunk: int = 8192) -> np.ndarray:
    """Vectorized rigidity ratio at many points, chunked to bound memory.

    Empty fields evaluate to 1.0 everywhere (homogeneous background).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if fld.n_centers == 0:
        return np.ones(len(pts))
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        block = pts[lo : lo + chunk]
        diff = block[:, None, :] - fld.centers[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        d = _smooth_min_rows(dist, fld.alpha_smoothmin)
        out[lo : lo + chunk] = _ratio_from_distance(d, fld)
    return out


def place_inclusions(grid: IntensityGrid, params: MaterialGenParams) -> MaterialField:
    """Draw one inclusion center per active bitmap pixel.

    Pixels are visited in row-major order.  Each active pixel gets a
    candidate drawn uniformly inside the centered subregion of its cell
    (side = pixel_subregion_fraction / 28); candidates closer than
    min_center_distance to an accepted center are redrawn up to
    max_rejection_attempts times, after which the pixel is skipped and
    logged.  Deterministic for a fixed (grid, seed): the counter-based
    Philox stream consumes two draws per attempt.
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(params.seed)))
    ncols = grid.width
    nrows = grid.height
    side = params.pixel_subregion_fraction / ncols
    dmin = params.min_center_distance

    accepted: list[np.ndarray] = []
    skipped: list[tuple[int, int]] = []
    for (row, col) in active_pixels(grid, params.intensity_threshold):
        cx = (col + 0.5) / ncols
        cy = 1.0 - (row + 0.5) / nrows  # row 0 = top of domain
        placed = False
        for _ in range(params.max_rejection_attempts):
            u, v = rng.random(2)
            cand = np.array([cx + (u - 0.5) * side, cy + (v - 0.5) * side])
            if not accepted:
                ok = True
            else:
                arr = np.asarray(accepted)
                ok = bool(np.min(np.hypot(arr[:, 0] - cand[0], arr[:, 1] - cand[1])) >= dmin)
            if ok:
                accepted.append(cand)
                placed = True
                break
        if not placed:
            skipped.append((row, col))

    centers = np.asarray(accepted).reshape(-1, 2)
    return MaterialField(centers=centers, skipped_pixels=tuple(skipped))


def rasterize_rigidity(fld: MaterialField, n: int) -> np.ndarray:
    """Evaluate r at the n x n cell centers; row 0 = top of domain."""
    if n < 1:
        raise ValueError("raster resolution must be >= 1")
    jj, ii = np.meshgrid(np.arange(n), np.arange(n))
    pts = np.column_stack([((jj + 0.5) / n).ravel(), (1.0 - (ii + 0.5) / n).ravel()])
    return rigidity_ratio_many(pts, fld).reshape(n, n)


def centers_to_csv(fld: MaterialField) -> str:
    """Centers as 'x,y' lines with 17 significant digits (lossless floats)."""
    return "".join(f"{x:.17g},{y:.17g}\n" for x, y in fld.centers)


def centers_from_csv(text: str, **field_kwargs) -> MaterialField:
    rows = [line.split(",") for line in text.splitlines() if line.strip()]
    centers = np.array([[float(a), float(b)] for a, b in rows]).reshape(-1, 2)
    return MaterialField(centers=centers, **field_kwargs)
