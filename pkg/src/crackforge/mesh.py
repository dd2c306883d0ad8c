"""Structured crossed-triangle mesh of the unit square with P1 interpolation.

Each lattice cell is split into 4 triangles by its centroid, so crack
paths see no preferred diagonal.  Lattice nodes come first in the node
numbering, centroid nodes after; elements are numbered 4 per cell in
row-major cell order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidResolution(ValueError):
    """Structured mesh needs at least 2 cells per side."""


class OutOfDomain(ValueError):
    """Query point outside the unit square."""


_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray     # (n_nodes, 2)
    elements: np.ndarray  # (n_elements, 3) node indices, counter-clockwise
    h: float              # minimum element edge length
    boundary_sets: dict   # name -> node-index array for bottom/top/left/right
    cells_per_side: int | None = None  # set for structured meshes; enables O(1) lookup

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]


def build_structured_mesh(n: int) -> Mesh:
    """Crossed-triangle mesh with n x n cells: (n+1)^2 + n^2 nodes, 4n^2 elements."""
    if n < 2:
        raise InvalidResolution(f"need n >= 2 cells per side, got {n}")
    ax = np.arange(n + 1) / n
    gx, gy = np.meshgrid(ax, ax, indexing="xy")
    lattice = np.column_stack([gx.ravel(), gy.ravel()])  # id = iy*(n+1) + ix
    cc = (np.arange(n) + 0.5) / n
    mx, my = np.meshgrid(cc, cc, indexing="xy")
    centroids = np.column_stack([mx.ravel(), my.ravel()])  # id offset by (n+1)^2
    nodes = np.vstack([lattice, centroids])

    n_lat = (n + 1) ** 2
    cx, cy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    cx = cx.ravel()
    cy = cy.ravel()
    sw = cy * (n + 1) + cx
    se = sw + 1
    nw = sw + (n + 1)
    ne = nw + 1
    cen = n_lat + cy * n + cx
    # 4 triangles per cell, all counter-clockwise around the centroid
    elements = np.empty((4 * n * n, 3), dtype=np.int64)
    elements[0::4] = np.column_stack([sw, se, cen])
    elements[1::4] = np.column_stack([se, ne, cen])
    elements[2::4] = np.column_stack([ne, nw, cen])
    elements[3::4] = np.column_stack([nw, sw, cen])

    boundary_sets = {
        "bottom": np.where(np.abs(nodes[:, 1]) <= _TOL)[0],
        "top": np.where(np.abs(nodes[:, 1] - 1.0) <= _TOL)[0],
        "left": np.where(np.abs(nodes[:, 0]) <= _TOL)[0],
        "right": np.where(np.abs(nodes[:, 0] - 1.0) <= _TOL)[0],
    }
    h = min(1.0 / n, np.sqrt(2.0) / (2.0 * n))
    return Mesh(nodes=nodes, elements=elements, h=h,
                boundary_sets=boundary_sets, cells_per_side=n)


def element_geometry(mesh: Mesh):
    """Signed areas and P1 shape-function gradients for every element.

    Returns (areas (ne,), grads (ne, 3, 2)) with grads[e, a] = grad N_a on
    element e (constant for linear triangles).
    """
    X = mesh.nodes[mesh.elements]  # (ne, 3, 2)
    b = np.stack([X[:, 1, 1] - X[:, 2, 1],
                  X[:, 2, 1] - X[:, 0, 1],
                  X[:, 0, 1] - X[:, 1, 1]], axis=1)
    c = np.stack([X[:, 2, 0] - X[:, 1, 0],
                  X[:, 0, 0] - X[:, 2, 0],
                  X[:, 1, 0] - X[:, 0, 0]], axis=1)
    areas = 0.5 * ((X[:, 1, 0] - X[:, 0, 0]) * (X[:, 2, 1] - X[:, 0, 1])
                   - (X[:, 2, 0] - X[:, 0, 0]) * (X[:, 1, 1] - X[:, 0, 1]))
    grads = np.stack([b, c], axis=2) / (2.0 * areas)[:, None, None]
    return areas, grads


# 3-point Gauss rule on the reference triangle (degree-2 exact); barycentric
# coordinates double as P1 shape-function values at the quadrature points.
GAUSS3_BARY = np.array([
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
])


def quadrature_points(mesh: Mesh) -> np.ndarray:
    """Physical coordinates of the 3 Gauss points per element, (ne, 3, 2)."""
    X = mesh.nodes[mesh.elements]
    return np.einsum("qa,ead->eqd", GAUSS3_BARY, X)


def _bary(p, a, b, c):
    det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    l1 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / det
    l2 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / det
    return l1, l2, 1.0 - l1 - l2


def locate(mesh: Mesh, x) -> tuple[int, tuple[float, float, float]]:
    """Containing element and barycentric coordinates for a point.

    Constant-time on structured meshes: the lattice cell is index
    arithmetic, then the cell's 4 triangles are tested in element order so
    boundary ties resolve toward the lower-index element.
    """
    if mesh.cells_per_side is None:
        raise ValueError("point location requires a structured mesh")
    p = np.asarray(x, dtype=np.float64)
    if not (-_TOL <= p[0] <= 1.0 + _TOL and -_TOL <= p[1] <= 1.0 + _TOL):
        raise OutOfDomain(f"point {tuple(p)} outside the unit square")
    n = mesh.cells_per_side
    cx = min(max(int(np.floor(p[0] * n)), 0), n - 1)
    cy = min(max(int(np.floor(p[1] * n)), 0), n - 1)
    cell = cy * n + cx
    best = None
    for t in range(4):
        e = 4 * cell + t
        a, b, c = mesh.nodes[mesh.elements[e]]
        lam = _bary(p, a, b, c)
        if min(lam) >= -1e-12:
            return e, lam
        if best is None or min(lam) > best[1]:
            best = (e, min(lam), lam)
    # roundoff can leave a point marginally outside all four; take the closest
    return best[0], best[2]


def interpolate(mesh: Mesh, nodal: np.ndarray, x) -> float:
    """P1 interpolation of a nodal field at a point of the unit square."""
    e, lam = locate(mesh, x)
    tri = mesh.elements[e]
    v = np.asarray(nodal)
    return float(lam[0] * v[tri[0]] + lam[1] * v[tri[1]] + lam[2] * v[tri[2]])


def interpolate_many(mesh: Mesh, nodal: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Vectorized P1 interpolation at many points (same tie-breaking as locate)."""
    if mesh.cells_per_side is None:
        raise ValueError("point location requires a structured mesh")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if np.any(pts < -_TOL) or np.any(pts > 1.0 + _TOL):
        raise OutOfDomain("some points fall outside the unit square")
    n = mesh.cells_per_side
    cx = np.clip(np.floor(pts[:, 0] * n).astype(np.int64), 0, n - 1)
    cy = np.clip(np.floor(pts[:, 1] * n).astype(np.int64), 0, n - 1)
    cell = cy * n + cx

    lams = np.empty((len(pts), 4, 3))
    for t in range(4):
        tri = mesh.elements[4 * cell + t]
        a = mesh.nodes[tri[:, 0]]
        b = mesh.nodes[tri[:, 1]]
        c = mesh.nodes[tri[:, 2]]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
        l1 = ((b[:, 0] - pts[:, 0]) * (c[:, 1] - pts[:, 1])
              - (c[:, 0] - pts[:, 0]) * (b[:, 1] - pts[:, 1])) / det
        l2 = ((c[:, 0] - pts[:, 0]) * (a[:, 1] - pts[:, 1])
              - (a[:, 0] - pts[:, 0]) * (c[:, 1] - pts[:, 1])) / det
        lams[:, t, 0] = l1
        lams[:, t, 1] = l2
        lams[:, t, 2] = 1.0 - l1 - l2
    inside = (lams >= -1e-12).all(axis=2)
    # first containing triangle in element order; fall back to least-negative
    tsel = np.where(inside.any(axis=1), inside.argmax(axis=1),
                    lams.min(axis=2).argmax(axis=1))
    rows = np.arange(len(pts))
    tri = mesh.elements[4 * cell + tsel]
    lam = lams[rows, tsel]
    v = np.asarray(nodal, dtype=np.float64)
    return (lam * v[tri]).sum(axis=1)


def export_off(mesh: Mesh) -> str:
    """Mesh as OFF-format text, for eyeballing in a viewer."""
    lines = ["OFF", f"{mesh.n_nodes} {mesh.n_elements} 0"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.nodes]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.elements]
    return "\n".join(lines) + "\n"
