"""Polynomial spaces on reference cells and the hybrid discretization spaces.

Reference bases are stored as coefficient grids (see :mod:`._poly`).  Vector
spaces are built component-wise: each scalar generator ``s`` contributes
``(s, 0)`` and ``(0, s)``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from . import _poly as P
from .exceptions import InvalidArgumentError, UnsupportedError
from .mesh import DIRICHLET, NEUMANN
from .quadrature import cell_rule, edge_rule

# -- scalar generators -------------------------------------------------------------


def monomials_total(r):
    """Monomials of total degree <= r, graded order."""
    return [(a, d - a) for d in range(r + 1) for a in range(d, -1, -1)]


def scalar_P(r):
    return [P.mono(a, b) for a, b in monomials_total(r)]


def scalar_Prs(r, s):
    """Degree <= r in x and <= s in y."""
    return [P.mono(a, b) for b in range(s + 1) for a in range(r + 1)]


def scalar_Q(r):
    return scalar_Prs(r, r)


def scalar_R(r):
    """Monomials of Q_{r+1} without the top one x^{r+1} y^{r+1}."""
    return [P.mono(a, b) for b in range(r + 2) for a in range(r + 2) if not (a == r + 1 and b == r + 1)]


def scalar_PTilde(r):
    """Homogeneous polynomials of degree exactly r."""
    return [P.mono(a, r - a) for a in range(r, -1, -1)]


def barycentric():
    return [P.ONE - P.X - P.Y, P.X.copy(), P.Y.copy()]


def v0_triangle(r):
    """Enrichment function for P^ph_r (r even)."""
    if r < 2 or r % 2:
        raise UnsupportedError("v0 on triangles is defined for even r >= 2")
    p1, p2, p3 = barycentric()
    e = (r - 2) // 2
    cyc = P.mul(p1 - p2, p2 - p3, p3 - p1)
    s = P.power(P.mul(p1, p2), e) + P.power(P.mul(p2, p3), e) + P.power(P.mul(p3, p1), e)
    return P.mul(cyc, s)


def v0_quad(r):
    """Enrichment function for Q^ph_r."""
    if r < 1:
        raise UnsupportedError("v0 on quadrilaterals needs r >= 1")
    bx = P.ONE - P.mul(P.X, P.X)
    by = P.ONE - P.mul(P.Y, P.Y)
    if r % 2:
        e = (r - 1) // 2
        return P.mul(bx - by, P.power(bx, e) + P.power(by, e))
    e = (r - 2) // 2
    return P.mul(P.X, P.Y, bx - by, P.power(bx, e) + P.power(by, e))


def bubble_triangle():
    p1, p2, p3 = barycentric()
    return P.mul(p1, p2, p3)


def scalar_PPh(r):
    base = scalar_P(r)
    return base + [v0_triangle(r)] if r % 2 == 0 else base


def scalar_QPh(r):
    return scalar_Q(r) + [v0_quad(r)]


def scalar_PS(r):
    """Stokes velocity space P_r + bubble * PTilde_{r-2} (r >= 2)."""
    b = bubble_triangle()
    return scalar_P(r) + [P.mul(b, q) for q in scalar_PTilde(r - 2)]


def vectorize(scalars):
    """Vector basis ``(nb, 2, D, D)``: all first components, then all second ones."""
    out = np.zeros((2 * len(scalars), 2, P.DEG, P.DEG))
    for i, s in enumerate(scalars):
        out[i, 0] = s
        out[len(scalars) + i, 1] = s
    return out


# -- descriptors -----------------------------------------------------------------

FAMILIES = (
    "P", "Q", "Prs", "R", "PTilde", "EdgeE", "PPh", "QPh", "PS",
    "XHdp", "XPh", "Mh", "PhUnmapped", "PhMapped", "RigidBody",
)


@dataclass(frozen=True)
class SpaceDescriptor:
    """A named local space.

    ``order2`` is only used by ``Prs`` (degree in the second variable).
    """

    family: str
    order: int
    cell_type: str
    value_shape: str = "scalar"
    order2: int = -1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedError(f"unknown space family {self.family!r}")
        if self.cell_type not in ("tri", "quad"):
            raise UnsupportedError(f"unknown cell type {self.cell_type!r}")

    @property
    def dim(self):
        if self.family == "EdgeE":
            m = 3 if self.cell_type == "tri" else 4
            return m * (self.order + 1) * (2 if self.value_shape == "vector2" else 1)
        if self.family == "RigidBody":
            return 3
        return len(reference_basis(self))


def _scalars(desc):
    f, r, c = desc.family, desc.order, desc.cell_type
    if f in ("P", "PhUnmapped", "PhMapped"):
        return scalar_P(r)
    if f == "Q":
        return scalar_Q(r)
    if f == "Prs":
        return scalar_Prs(r, desc.order2)
    if f == "R":
        return scalar_R(r)
    if f == "PTilde":
        return scalar_PTilde(r)
    if f == "PPh" and c == "tri":
        return scalar_PPh(r)
    if f == "QPh" and c == "quad":
        return scalar_QPh(r)
    if f == "PS" and c == "tri":
        return scalar_PS(r)
    raise UnsupportedError(f"space {f} is not available on {c} cells")


def reference_basis(desc):
    """Reference coefficient grids; vector spaces have shape (nb, 2, D, D)."""
    return _reference_basis_cached(desc)


@lru_cache(maxsize=None)
def _reference_basis_cached(desc):
    if desc.family in ("XHdp", "XPh"):
        return displacement_reference(desc.cell_type, desc.order, desc.family == "XHdp")
    if desc.family in ("EdgeE", "Mh", "RigidBody"):
        raise UnsupportedError(f"{desc.family} has no polynomial reference basis")
    s = _scalars(desc)
    return vectorize(s) if desc.value_shape == "vector2" else np.array(s)


def displacement_reference(cell_type, r, bubbles=True):
    """Raw vector basis of the displacement space of order ``r`` (``r + 1`` polynomial degree).

    Triangles: P^ph_{r+1} (+ bubble * PTilde_{r-1}, vector valued, if ``bubbles``).
    Quadrilaterals: Q^ph_{r+1}.  ``r = 0`` gives P^ph_1 = P_1 / Q^ph_1.
    """
    if cell_type == "tri":
        s = scalar_PPh(r + 1)
        if bubbles and r >= 1:
            b = bubble_triangle()
            s = s + [P.mul(b, q) for q in scalar_PTilde(r - 1)]
    else:
        s = scalar_QPh(r + 1)
    return vectorize(s)


def orthonormalize_reference(basis, cell_type, tol=1e-10):
    """Orthonormalize a (vector) basis in the reference L2 inner product.

    Raises if the basis is numerically dependent.
    """
    rule = cell_rule(cell_type, 2 * (P.degree(basis) + 1))
    vals = P.evaluate(basis, rule.points)  # (nq, nb[, 2])
    vals = vals.reshape(len(rule), len(basis), -1)
    G = np.einsum("q,qac,qbc->ab", rule.weights, vals, vals)
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= tol * ev[-1]:
        raise UnsupportedError("reference basis is linearly dependent (rank guard)")
    L = np.linalg.cholesky(G)
    Linv = np.linalg.inv(L)
    return np.tensordot(Linv, basis, axes=(1, 0))


# -- evaluation ----------------------------------------------------------------------


def eval_basis(desc, emap, points):
    """Values and reference gradients of a space at reference ``points``.

    Returns ``(values, ref_grads)``; for vector spaces ``values`` is (nq, nb, 2)
    and ``ref_grads`` (nq, nb, 2, 2) with the derivative index last.  For
    ``PhUnmapped`` the monomials are evaluated in physical coordinates and the
    gradients are physical.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if desc.family == "RigidBody":
        from .mesh import map_point

        x = map_point(emap, points)
        return rigid_body_values(x, np.zeros(2)), None
    if desc.family == "PhUnmapped":
        from .mesh import map_point

        x = map_point(emap, points)
        basis = reference_basis(SpaceDescriptor("P", desc.order, desc.cell_type))
        return P.evaluate(basis, x), P.evaluate(P.gradient(basis), x)
    basis = reference_basis(desc)
    return P.evaluate(basis, points), P.evaluate(P.gradient(basis), points)


def rigid_body_values(x, center):
    """Rigid modes (1,0), (0,1), (-(y-yc), x-xc) at points ``x[..., 2]``.

    Returns an array of shape ``x.shape[:-1] + (3, 2)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (3, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = -(x[..., 1] - center[..., 1])
    out[..., 2, 1] = x[..., 0] - center[..., 0]
    return out


def rigid_body_basis(emap=None):
    """Callable returning the three rigid modes at physical points (centered at the origin)."""
    return lambda x: rigid_body_values(x, np.zeros(2))


def legendre_values(r, t):
    """Legendre polynomials P_0..P_r at ``t``, shape (len(t), r+1)."""
    return legendre.legvander(np.asarray(t, dtype=float).ravel(), r)


def eval_edge_basis(r, t, direction=1.0, sign=1.0):
    """Vector edge basis at local edge parameters ``t`` in [-1, 1].

    The canonical parameter is ``s = direction * t``; DOF ``j = c*(r+1) + k`` is
    ``sign * P_k(s) e_c``.  Returns (nq, 2(r+1), 2).
    """
    L = legendre_values(r, direction * np.asarray(t, dtype=float))
    nq = L.shape[0]
    out = np.zeros((nq, 2 * (r + 1), 2))
    out[:, : r + 1, 0] = L
    out[:, r + 1 :, 1] = L
    return sign * out


# -- dof layout ---------------------------------------------------------------------


@dataclass
class DofLayout:
    """Global numbering of the multiplier DOFs and per-element signs.

    ``edge_offset[e]`` is the first DOF of edge ``e`` (``-1`` for Neumann edges).
    """

    n_per_edge: int
    edge_offset: np.ndarray
    n_dofs: int
    elem_edge_sign: np.ndarray
    elem_edge_dir: np.ndarray
    active_edges: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, mesh, r):
        npe = 2 * (r + 1)
        active = mesh.edge_tags != NEUMANN
        off = -np.ones(mesh.n_edges, dtype=np.int64)
        idx = np.flatnonzero(active)
        off[idx] = np.arange(len(idx)) * npe
        return cls(npe, off, len(idx) * npe, mesh.elem_edge_sign, mesh.elem_edge_dir, idx)


# -- hybrid discretization spaces --------------------------------------------------

METHODS = ("hdp", "ph", "ap")


@dataclass
class HybridSpaces:
    """Local spaces and DOF bookkeeping for one (mesh, method, r) combination.

    Attributes
    ----------
    x_ref : (nb, 2, D, D)
        Reference displacement basis, orthonormal in the reference L2 product.
    n_rigid : int
        Number of kernel modes ordered first after the per-element change of
        basis (3 for HDP/PH, 2 for AP).
    n_p : int
        Local pressure dimension (0 for PH/AP).
    """

    mesh: object
    method: str
    r: int
    pressure: str
    x_ref: np.ndarray
    n_rigid: int
    n_p: int
    layout: DofLayout
    _T: np.ndarray = field(default=None, repr=False)
    _Lp: np.ndarray = field(default=None, repr=False)

    @property
    def n_u(self):
        return len(self.x_ref)

    @property
    def cell_type(self):
        return self.mesh.cell_type

    @property
    def n_m_local(self):
        return self.mesh.n_corners * self.layout.n_per_edge

    # descriptors for reporting
    def descriptors(self):
        ct = self.cell_type
        x = SpaceDescriptor("XHdp" if self.method == "hdp" else "XPh", self.r, ct, "vector2")
        m = SpaceDescriptor("EdgeE", self.r, ct, "vector2")
        if self.method != "hdp":
            return x, m
        fam = "PhUnmapped" if self.pressure == "unmapped" else "PhMapped"
        return x, m, SpaceDescriptor(fam, self.r, ct)

    # -- displacement -----------------------------------------------------------------
    def rigid_transform(self):
        """Per-element change of basis ``T`` (ne, nb, nb): columns = [kernel modes, complement]."""
        if self._T is None:
            rule = cell_rule(self.cell_type, 2 * (P.degree(self.x_ref) + 2))
            vals = P.evaluate(self.x_ref, rule.points)  # (nq, nb, 2)
            x = self.mesh.map_points(rule.points)  # (ne, nq, 2)
            modes = rigid_body_values(x, self.mesh.centroids[:, None, :])[:, :, : self.n_rigid]
            R = np.einsum("q,qbc,eqkc->ebk", rule.weights, vals, modes)
            Q, _ = np.linalg.qr(R, mode="complete")
            self._T = np.concatenate([R, Q[:, :, self.n_rigid :]], axis=2)
        return self._T

    def u_ref_eval(self, pts):
        """Reference values (nq, nb, 2) and reference gradients (nq, nb, 2, 2)."""
        return _eval_cached(self.x_ref, pts)

    def u_eval(self, elems, pts, DF=None):
        """Values (ne, nq, nb, 2) and physical gradients (ne, nq, nb, 2, 2)."""
        v, g = self.u_ref_eval(pts)
        T = self.rigid_transform()[elems]
        nq, nb = v.shape[:2]
        # contract the basis index with the change of basis through BLAS
        val = np.matmul(np.swapaxes(T, 1, 2), v.transpose(1, 0, 2).reshape(nb, -1))
        val = val.reshape(len(elems), nb, nq, 2).transpose(0, 2, 1, 3)
        if DF is None:
            return val, None
        gref = np.matmul(np.swapaxes(T, 1, 2), g.transpose(1, 0, 2, 3).reshape(nb, -1))
        gref = gref.reshape(len(elems), nb, nq, 2, 2).transpose(0, 2, 1, 3, 4)
        DFinv = np.linalg.inv(DF)  # (ne, nq, 2, 2)
        grad = np.matmul(gref, DFinv[:, :, None])
        return val, grad

    # -- pressure -----------------------------------------------------------------------
    def _p_raw(self, elems, pts, x=None):
        mono = monomials_total(self.r)
        if self.pressure == "unmapped":
            if x is None:
                x = self.mesh.map_points(pts, elems)
            c = self.mesh.centroids[elems][:, None, :]
            h = self.mesh.diameters[elems][:, None, None]
            y = (x - c) / h
        else:
            y = np.broadcast_to(np.asarray(pts)[None], (len(elems),) + np.shape(pts))
        return np.stack([y[..., 0] ** a * y[..., 1] ** b for a, b in mono], axis=-1)

    def pressure_transform(self):
        """Per-element lower-triangular maps making the pressure basis L2(K)-orthonormal."""
        if self._Lp is None:
            rule = cell_rule(self.cell_type, 2 * self.r + 6)
            elems = np.arange(self.mesh.n_elements)
            raw = self._p_raw(elems, rule.points)
            _, J = self.mesh.jacobians(rule.points)
            G = np.einsum("q,eq,eqa,eqb->eab", rule.weights, J, raw, raw)
            L = np.linalg.cholesky(G)
            self._Lp = np.linalg.inv(L)
        return self._Lp

    def p_eval(self, elems, pts, x=None):
        """Orthonormal pressure basis values (ne, nq, np)."""
        raw = self._p_raw(elems, pts, x)
        return np.einsum("eqb,eab->eqa", raw, self.pressure_transform()[elems])

    # -- multipliers --------------------------------------------------------------------
    def element_m_dofs(self, elems=None):
        """Global multiplier DOF indices (ne, ncorner*npe); -1 on Neumann edges."""
        ee = self.mesh.elem_edges if elems is None else self.mesh.elem_edges[elems]
        off = self.layout.edge_offset[ee]  # (ne, nc)
        npe = self.layout.n_per_edge
        d = off[:, :, None] + np.arange(npe)[None, None, :]
        d = np.where(off[:, :, None] < 0, -1, d)
        return d.reshape(len(ee), -1)


_EVAL_CACHE = {}


def _eval_cached(basis, pts):
    key = (id(basis), pts.shape, pts.tobytes())
    hit = _EVAL_CACHE.get(key)
    if hit is None:
        hit = (P.evaluate(basis, pts), P.evaluate(P.gradient(basis), pts))
        if len(_EVAL_CACHE) > 64:
            _EVAL_CACHE.clear()
        _EVAL_CACHE[key] = hit
    return hit


@lru_cache(maxsize=None)
def _x_reference(cell_type, r, bubbles):
    return orthonormalize_reference(displacement_reference(cell_type, r, bubbles), cell_type)


def build_spaces(mesh, method, r, pressure="unmapped"):
    """Build the local spaces for ``method`` in {'hdp', 'ph', 'ap'}."""
    if method not in METHODS:
        raise UnsupportedError(f"unknown method {method!r}")
    if pressure not in ("unmapped", "mapped"):
        raise InvalidArgumentError(f"pressure must be 'mapped' or 'unmapped', got {pressure!r}")
    if method in ("hdp", "ph") and r < 1:
        raise UnsupportedError(f"{method.upper()} needs r >= 1: lowest order lacks rigid-body traces")
    if not 0 <= r <= 2:
        raise UnsupportedError(f"r = {r} is not supported (0..2 for AP, 1..2 otherwise)")
    if method == "ap" and np.any(mesh.edge_tags == NEUMANN):
        raise UnsupportedError("the AP variant is only available for pure Dirichlet problems")
    x_ref = _x_reference(mesh.cell_type, r, method == "hdp")
    n_rigid = 2 if method == "ap" else 3
    n_p = (r + 1) * (r + 2) // 2 if method == "hdp" else 0
    return HybridSpaces(mesh, method, r, pressure, x_ref, n_rigid, n_p, DofLayout.build(mesh, r))


def build_hdp_spaces(r, mesh, pressure="unmapped"):
    return build_spaces(mesh, "hdp", r, pressure)


def build_ph_spaces(r, mesh, method="ph"):
    return build_spaces(mesh, method, r)
