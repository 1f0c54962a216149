"""Structured meshes of triangles and quadrilaterals with their geometric maps.

Reference cells are the unit triangle ``{x > 0, y > 0, x + y < 1}`` and the
square ``(-1, 1)^2``.  Element vertices are stored counter-clockwise and the
local edge ``k`` of an element runs from local vertex ``k`` to ``k + 1``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import GeometryError, InvalidArgumentError

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
_TAG_CHARS = {DIRICHLET: "D", NEUMANN: "N"}
_CHAR_TAGS = {"D": DIRICHLET, "N": NEUMANN}

REF_CORNERS = {
    "tri": np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    "quad": np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
}


def ref_edge_points(cell_type, k, t):
    """Reference points on local edge ``k`` for edge parameters ``t`` in [-1, 1]."""
    c = REF_CORNERS[cell_type]
    m = len(c)
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    return 0.5 * (1 - t) * c[k] + 0.5 * (1 + t) * c[(k + 1) % m]


def ref_edge_normals(cell_type):
    """Outward unit normals and lengths of the reference cell edges."""
    c = REF_CORNERS[cell_type]
    d = np.roll(c, -1, axis=0) - c
    length = np.linalg.norm(d, axis=1)
    n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    return n, length


@dataclass(frozen=True)
class ElementMap:
    """Map ``F(x) = a0 + a1 x + a2 y + a3 x y`` of one element.

    ``coeffs`` has rows ``a0, a1, a2, a3`` (each a 2-vector); ``a3`` is zero for
    affine maps.
    """

    kind: str
    coeffs: np.ndarray
    corner_jacobians: np.ndarray = field(repr=False)

    @classmethod
    def from_vertices(cls, verts):
        verts = np.asarray(verts, dtype=float)
        coeffs = _map_coeffs(verts[None])[0]
        kind = "affine" if len(verts) == 3 else "bilinear"
        cell = "tri" if len(verts) == 3 else "quad"
        cj = _jac(coeffs[None], REF_CORNERS[cell])[1][0]
        return cls(kind, coeffs, cj)


def _map_coeffs(verts):
    """Map coefficients for a batch of elements, shape (ne, 4, 2)."""
    ne, nc, _ = verts.shape
    a = np.zeros((ne, 4, 2))
    if nc == 3:
        a[:, 0] = verts[:, 0]
        a[:, 1] = verts[:, 1] - verts[:, 0]
        a[:, 2] = verts[:, 2] - verts[:, 0]
    else:
        v0, v1, v2, v3 = (verts[:, i] for i in range(4))
        a[:, 0] = (v0 + v1 + v2 + v3) / 4
        a[:, 1] = (-v0 + v1 + v2 - v3) / 4
        a[:, 2] = (-v0 - v1 + v2 + v3) / 4
        a[:, 3] = (v0 - v1 + v2 - v3) / 4
    return a


def _map(coeffs, pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    basis = np.stack([np.ones_like(x), x, y, x * y], axis=1)  # (nq, 4)
    return np.einsum("qk,ekd->eqd", basis, coeffs)


def _jac(coeffs, pts):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    a1, a2, a3 = coeffs[:, 1], coeffs[:, 2], coeffs[:, 3]
    col0 = a1[:, None, :] + a3[:, None, :] * y[None, :, None]
    col1 = a2[:, None, :] + a3[:, None, :] * x[None, :, None]
    DF = np.stack([col0, col1], axis=-1)  # (ne, nq, 2, 2), DF[..., i, j] = dF_i/dx_j
    J = DF[..., 0, 0] * DF[..., 1, 1] - DF[..., 0, 1] * DF[..., 1, 0]
    return DF, J


def map_point(emap, ref_point):
    """Physical image of reference point(s) under ``emap``."""
    out = _map(emap.coeffs[None], ref_point)[0]
    return out[0] if np.ndim(ref_point) == 1 else out


def jacobian(emap, ref_point):
    """Return ``(DF, det DF)`` at reference point(s)."""
    DF, J = _jac(emap.coeffs[None], ref_point)
    if np.ndim(ref_point) == 1:
        return DF[0, 0], J[0, 0]
    return DF[0], J[0]


def inverse_map(emap, point, tol=1e-14, maxiter=50):
    """Reference coordinates of a physical point (Newton from the cell centroid)."""
    point = np.asarray(point, dtype=float)
    if emap.kind == "affine":
        A = emap.coeffs[1:3].T
        return np.linalg.solve(A, point - emap.coeffs[0])
    xh = np.zeros(2)
    scale = max(np.abs(emap.coeffs[1:]).max(), 1e-300)
    for _ in range(maxiter):
        res = map_point(emap, xh) - point
        if np.linalg.norm(res) <= tol * scale:
            return xh
        DF, _ = jacobian(emap, xh)
        xh = xh - np.linalg.solve(DF, res)
    res = map_point(emap, xh) - point
    if np.linalg.norm(res) <= 1e-12 * scale:
        return xh
    raise GeometryError(f"inverse_map did not converge after {maxiter} Newton steps")


@dataclass(frozen=True)
class ShapeMetrics:
    h: np.ndarray
    rho: np.ndarray
    theta: float


class Mesh:
    """Conforming 2D mesh with edge topology and boundary tags.

    Parameters
    ----------
    vertices : (nv, 2) array
    elements : (ne, 3|4) int array, counter-clockwise
    boundary : callable or dict
        Either a predicate ``boundary(midpoint) -> 'D' | 'N'`` applied to each
        boundary edge midpoint, or a mapping ``{(v0, v1): 'D' | 'N'}``.
    """

    def __init__(self, vertices, elements, boundary=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        nc = self.elements.shape[1]
        if nc not in (3, 4):
            raise InvalidArgumentError("elements must have 3 or 4 vertices")
        self.cell_type = "tri" if nc == 3 else "quad"
        self._build_edges()
        self._tag_boundary(boundary if boundary is not None else (lambda mid: "D"))
        self._check_geometry()

    # -- topology --------------------------------------------------------
    def _build_edges(self):
        ne, nc = self.elements.shape
        a = self.elements
        b = np.roll(self.elements, -1, axis=1)
        pairs = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=-1).reshape(-1, 2)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise GeometryError("an edge is shared by more than two elements")
        self.edges = edges
        self.elem_edges = inverse.reshape(ne, nc)
        owner = np.repeat(np.arange(ne), nc)
        order = np.argsort(inverse, kind="stable")
        edge_elems = -np.ones((len(edges), 2), dtype=np.int64)
        sorted_edges = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        edge_elems[sorted_edges[first], 0] = owner[order][first]
        edge_elems[sorted_edges[~first], 1] = owner[order][~first]
        self.edge_elems = edge_elems
        # Lower-index element owns the multiplier sign +1.
        self.elem_edge_sign = np.where(edge_elems[self.elem_edges, 0] == np.arange(ne)[:, None], 1.0, -1.0)
        # Local edge direction relative to the canonical (ascending) orientation.
        self.elem_edge_dir = np.where(a < b, 1.0, -1.0)

    def _tag_boundary(self, boundary):
        tags = np.zeros(len(self.edges), dtype=np.int64)
        bnd = np.flatnonzero(self.edge_elems[:, 1] < 0)
        for e in bnd:
            v0, v1 = self.edges[e]
            if callable(boundary):
                mid = 0.5 * (self.vertices[v0] + self.vertices[v1])
                c = boundary(mid)
            else:
                c = boundary.get((v0, v1), boundary.get((v1, v0)))
            if c not in _CHAR_TAGS:
                raise InvalidArgumentError(f"boundary tag for edge {(v0, v1)} must be 'D' or 'N', got {c!r}")
            tags[e] = _CHAR_TAGS[c]
        self.edge_tags = tags

    def _check_geometry(self):
        DF, J = _jac(self.map_coeffs, REF_CORNERS[self.cell_type])
        if np.any(J <= 0):
            bad = int(np.flatnonzero((J <= 0).any(axis=1))[0])
            raise GeometryError(f"element {bad} is degenerate, inverted or non-convex")

    # -- geometry --------------------------------------------------------
    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_corners(self):
        return self.elements.shape[1]

    @cached_property
    def map_coeffs(self):
        return _map_coeffs(self.vertices[self.elements])

    def element_map(self, k):
        return ElementMap.from_vertices(self.vertices[self.elements[k]])

    def element_maps(self):
        return [self.element_map(k) for k in range(self.n_elements)]

    def map_points(self, ref_pts, elems=None):
        """Physical points, shape (ne, nq, 2)."""
        c = self.map_coeffs if elems is None else self.map_coeffs[elems]
        return _map(c, ref_pts)

    def jacobians(self, ref_pts, elems=None):
        """``(DF, J)`` with shapes (ne, nq, 2, 2) and (ne, nq)."""
        c = self.map_coeffs if elems is None else self.map_coeffs[elems]
        return _jac(c, ref_pts)

    @cached_property
    def centroids(self):
        return self.vertices[self.elements].mean(axis=1)

    @cached_property
    def diameters(self):
        v = self.vertices[self.elements]
        d = np.linalg.norm(v[:, :, None, :] - v[:, None, :, :], axis=-1)
        return d.max(axis=(1, 2))

    @cached_property
    def areas(self):
        v = self.vertices[self.elements]
        x, y = v[..., 0], v[..., 1]
        return 0.5 * np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)

    @cached_property
    def edge_lengths(self):
        v = self.vertices[self.edges]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    @cached_property
    def domain_diameter(self):
        from scipy.spatial import ConvexHull

        hull = self.vertices[ConvexHull(self.vertices).vertices]
        return float(np.linalg.norm(hull[:, None] - hull[None], axis=-1).max())

    def boundary_edges(self, tag=None):
        mask = self.edge_elems[:, 1] < 0
        if tag is not None:
            mask &= self.edge_tags == tag
        return np.flatnonzero(mask)

    # -- io ------------------------------------------------------------------
    def to_text(self):
        lines = [f"cells {self.cell_type} {len(self.vertices)} {self.n_elements}"]
        lines += [f"v {x!r} {y!r}" for x, y in self.vertices.tolist()]
        lines += ["e " + " ".join(str(i) for i in el) for el in self.elements.tolist()]
        for e in self.boundary_edges():
            v0, v1 = self.edges[e]
            lines.append(f"b {v0} {v1} {_TAG_CHARS[self.edge_tags[e]]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or rows[0][0] != "cells":
            raise InvalidArgumentError("mesh text must start with a 'cells' header")
        _, ctype, nv, ne = rows[0]
        verts, elems, bnd = [], [], {}
        for r in rows[1:]:
            if r[0] == "v":
                verts.append([float(r[1]), float(r[2])])
            elif r[0] == "e":
                elems.append([int(i) for i in r[1:]])
            elif r[0] == "b":
                bnd[(int(r[1]), int(r[2]))] = r[3]
            else:
                raise InvalidArgumentError(f"unknown mesh record {r[0]!r}")
        if len(verts) != int(nv) or len(elems) != int(ne):
            raise InvalidArgumentError("mesh header counts do not match the records")
        mesh = cls(np.array(verts), np.array(elems), bnd)
        if mesh.cell_type != ctype:
            raise InvalidArgumentError("cell type in header does not match element records")
        return mesh

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


# -- metrics -------------------------------------------------------------------
def _incircle_diameter(p0, p1, p2):
    a = np.linalg.norm(p1 - p2, axis=-1)
    b = np.linalg.norm(p0 - p2, axis=-1)
    c = np.linalg.norm(p0 - p1, axis=-1)
    area = 0.5 * np.abs((p1 - p0)[..., 0] * (p2 - p0)[..., 1] - (p1 - p0)[..., 1] * (p2 - p0)[..., 0])
    return 4.0 * area / (a + b + c)


def shape_metrics(mesh):
    """Diameters ``h_K``, inner measures ``rho_K`` and the shape constant ``theta``.

    For quadrilaterals ``rho_K`` is twice the smallest incircle diameter of the
    four corner triangles ``(v_{i-1}, v_i, v_{i+1})``.
    """
    v = mesh.vertices[mesh.elements]
    if np.any(mesh.areas <= 0):
        raise GeometryError("degenerate element with non-positive area")
    if mesh.cell_type == "tri":
        rho = _incircle_diameter(v[:, 0], v[:, 1], v[:, 2])
    else:
        d = [_incircle_diameter(v[:, (i - 1) % 4], v[:, i], v[:, (i + 1) % 4]) for i in range(4)]
        rho = 2.0 * np.min(d, axis=0)
    if np.any(rho <= 0):
        raise GeometryError("degenerate element with zero inscribed circle")
    h = mesh.diameters
    return ShapeMetrics(h, rho, float(np.max(h / rho)))


# -- generators ----------------------------------------------------------------
def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n!r}")


def _grid(n, domain):
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")  # vertex (i, j) has index i*(n+1)+j
    return np.column_stack([X.ravel(), Y.ravel()])


def _vid(n, i, j):
    return i * (n + 1) + j


def _square_cells(n):
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    return np.column_stack([_vid(n, i, j), _vid(n, i + 1, j), _vid(n, i + 1, j + 1), _vid(n, i, j + 1)])


UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))


def generate_square_mesh(n, domain=UNIT_SQUARE, boundary=None):
    """``n x n`` congruent squares (rectangles) over ``domain = ((x0, x1), (y0, y1))``."""
    _check_n(n)
    return Mesh(_grid(n, domain), _square_cells(n), boundary)


def generate_triangular_mesh(n, domain=UNIT_SQUARE, boundary=None):
    """Each square of the ``n x n`` grid split along its SW-NE diagonal."""
    _check_n(n)
    q = _square_cells(n)
    sw, se, ne, nw = q.T
    tris = np.empty((2 * len(q), 3), dtype=np.int64)
    tris[0::2] = np.column_stack([sw, se, ne])
    tris[1::2] = np.column_stack([sw, ne, nw])
    return Mesh(_grid(n, domain), tris, boundary)


def trapezoid_offsets(n, delta, pattern="congruent"):
    """Vertical vertex offsets ``d[i, j]`` in units of the row height.

    ``congruent``: vertices of odd rows move by ``(-1)^i delta``; all ``n^2``
    cells are congruent trapezoids with vertical sides ``h(1 -+ delta)`` and the
    boundary stays flat (requires even ``n``).
    ``checkerboard``: interior vertices move by ``(-1)^(i+j) delta``; interior
    cells have vertical sides ``h(1 -+ 2 delta)``.
    """
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    if pattern == "congruent":
        d = np.where(j % 2 == 1, (-1.0) ** i * delta, 0.0)
    elif pattern == "checkerboard":
        d = (-1.0) ** (i + j) * delta
        d[0, :] = d[-1, :] = d[:, 0] = d[:, -1] = 0.0
    else:
        raise InvalidArgumentError(f"unknown trapezoid pattern {pattern!r}")
    return d


def generate_trapezoidal_mesh(n, domain=UNIT_SQUARE, delta=0.25, boundary=None, pattern="congruent"):
    """Square grid with vertex rows shifted vertically into trapezoids.

    Parameters
    ----------
    n : even positive int
    delta : float in [0, 1/2)
        Relative offset of the moved vertices.
    pattern : {'congruent', 'checkerboard'}
        See :func:`trapezoid_offsets`.
    """
    _check_n(n)
    if n % 2:
        raise InvalidArgumentError(f"trapezoidal meshes need an even n, got {n}")
    if not 0.0 <= delta < 0.5:
        raise InvalidArgumentError(f"delta must lie in [0, 1/2), got {delta}")
    verts = _grid(n, domain)
    hy = (domain[1][1] - domain[1][0]) / n
    verts[:, 1] += hy * trapezoid_offsets(n, delta, pattern).ravel()
    return Mesh(verts, _square_cells(n), boundary)


def generate_mesh(family, n, domain=UNIT_SQUARE, boundary=None, **kw):
    """Dispatch on ``family`` in {'triangular', 'square', 'trapezoidal'}."""
    if family == "triangular":
        return generate_triangular_mesh(n, domain, boundary)
    if family == "square":
        return generate_square_mesh(n, domain, boundary)
    if family == "trapezoidal":
        return generate_trapezoidal_mesh(n, domain, boundary=boundary, **kw)
    raise InvalidArgumentError(f"unknown mesh family {family!r}")
