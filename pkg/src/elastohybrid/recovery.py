"""Element-local H(div)-conforming stress recovery.

Each row of the stress lives in a Piola-mapped vector space:
``rt`` (triangles, P_r^2 + x P~_r), ``abf`` (quadrilaterals,
P_{r+2,r} x P_{r,r+2}) or ``rt-on-quad`` (quadrilaterals, Q_{r+1,r} x Q_{r,r+1}).
Row ``i`` maps as ``sigma_i = DF sigma_hat_i / J`` so that
``sigma = sigma_hat DF^T / J``.

All degrees of freedom used here are invariant under the Piola map, so the
local matrix only depends on the reference cell and is factorized once.
"""

import csv
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import _poly as P
from .exceptions import RecoveryError, UnsupportedError
from .mesh import NEUMANN, ref_edge_normals, ref_edge_points
from .quadrature import cell_rule, edge_rule
from .solver import chunks, default_quad_degree, edge_geometry
from .spaces import eval_edge_basis, legendre_values, monomials_total, scalar_P, scalar_Prs, scalar_PTilde, vectorize

FAMILY_CELL = {"rt": "tri", "abf": "quad", "rt-on-quad": "quad"}


def _pair(first, second):
    """Vector basis with scalars ``first`` in component 0 and ``second`` in component 1."""
    out = np.zeros((len(first) + len(second), 2, P.DEG, P.DEG))
    for i, s in enumerate(first):
        out[i, 0] = s
    for i, s in enumerate(second):
        out[len(first) + i, 1] = s
    return out


def row_space(family, r):
    """Reference vector basis of one stress row."""
    if family == "rt":
        base = vectorize(scalar_P(r))
        extra = np.array([np.stack([P.mul(P.X, q), P.mul(P.Y, q)]) for q in scalar_PTilde(r)])
        return np.concatenate([base, extra])
    if family == "abf":
        return _pair(scalar_Prs(r + 2, r), scalar_Prs(r, r + 2))
    if family == "rt-on-quad":
        return _pair(scalar_Prs(r + 1, r), scalar_Prs(r, r + 1))
    raise UnsupportedError(f"unknown tensor family {family!r}")


def psi_space(cell_type, r):
    """Reference test functions of the interior moments (per row)."""
    if cell_type == "tri":
        return vectorize(scalar_P(r - 1))
    return _pair(scalar_Prs(r - 1, r), scalar_Prs(r, r - 1))


def phi_space(r):
    """Scalar divergence test functions for ABF: x^{r+1} y^s and x^s y^{r+1}."""
    return [P.mono(r + 1, s) for s in range(r + 1)] + [P.mono(s, r + 1) for s in range(r + 1)]


@dataclass(frozen=True)
class TensorSpace:
    family: str
    r: int
    cell_type: str
    basis: np.ndarray  # (nd, 2, D, D) per row

    @property
    def row_dim(self):
        return len(self.basis)

    @property
    def dim(self):
        return 2 * self.row_dim


@lru_cache(maxsize=None)
def build_tensor_space(family, r, cell_type=None):
    """Tensor space of ``family`` in {'rt', 'abf', 'rt-on-quad'} and index ``r``."""
    if family not in FAMILY_CELL:
        raise UnsupportedError(f"unknown tensor family {family!r}")
    ct = FAMILY_CELL[family]
    if cell_type is not None and cell_type != ct:
        raise UnsupportedError(f"family {family!r} is not defined on {cell_type} cells")
    if r not in (1, 2):
        raise UnsupportedError(f"stress recovery supports r in {{1, 2}}, got {r}")
    return TensorSpace(family, r, ct, row_space(family, r))


@lru_cache(maxsize=None)
def _reference_system(family, r):
    """LU factors of the (row) DOF matrix and its condition number."""
    ts = build_tensor_space(family, r)
    ct, basis = ts.cell_type, ts.basis
    deg = 2 * (P.degree(basis) + 3)
    rows = []
    # edge moments
    erule = edge_rule(deg)
    t, wt = erule.points[:, 0], erule.weights
    normals, lengths = ref_edge_normals(ct)
    L = legendre_values(r, t)
    for k in range(len(normals)):
        v = P.evaluate(basis, ref_edge_points(ct, k, t))  # (nq, nd, 2)
        vn = v @ normals[k]
        rows.append(np.einsum("q,qj,qb->jb", wt * lengths[k] / 2, L, vn))
    crule = cell_rule(ct, deg)
    vals = P.evaluate(basis, crule.points)
    psi = P.evaluate(psi_space(ct, r), crule.points)
    rows.append(np.einsum("q,qac,qbc->ab", crule.weights, psi, vals))
    if family == "abf":
        div = P.evaluate(P.deriv(basis[:, 0], 0) + P.deriv(basis[:, 1], 1), crule.points)
        phi = P.evaluate(np.array(phi_space(r)), crule.points)
        rows.append(np.einsum("q,qa,qb->ab", crule.weights, phi, div))
    M = np.concatenate(rows)
    if M.shape[0] != M.shape[1]:
        raise RecoveryError(f"{family} r={r}: {M.shape[0]} functionals for {M.shape[1]} unknowns")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise RecoveryError(f"{family} r={r}: local recovery matrix is singular (cond {cond:.2e})")
    return lu_factor(M), cond


def reference_condition(family, r):
    return _reference_system(family, r)[1]


@dataclass
class RecoveredStress:
    """Per-element coefficients ``coeffs[e, i, :]`` of row ``i`` in the reference row basis."""

    mesh: object
    space: TensorSpace
    coeffs: np.ndarray
    source: str = "hdp"

    def evaluate(self, elems, pts, DF=None, J=None):
        """Stress (ne, nq, 2, 2) and divergence (ne, nq, 2) at reference points."""
        if DF is None:
            DF, J = self.mesh.jacobians(pts, elems)
        b = self.space.basis
        v = P.evaluate(b, pts)  # (nq, nd, 2)
        dv = P.evaluate(P.deriv(b[:, 0], 0) + P.deriv(b[:, 1], 1), pts)  # (nq, nd)
        c = self.coeffs[elems]
        shat = np.einsum("qbk,eib->eqik", v, c)
        sig = np.einsum("eqik,eqjk->eqij", shat, DF) / J[..., None, None]
        div = np.einsum("qb,eib->eqi", dv, c) / J[..., None]
        return sig, div

    def coefficients_csv(self):
        """``element_id,family,r,c0..`` with row 0 coefficients followed by row 1."""
        flat = self.coeffs.reshape(self.mesh.n_elements, -1)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["element_id", "family", "r"] + [f"c{i}" for i in range(flat.shape[1])])
        for e, row in enumerate(flat):
            w.writerow([e, self.space.family, self.space.r] + [format(v, ".16e") for v in row])
        return buf.getvalue()

    def samples_csv(self, ref_points=None):
        """Stress sampled at the reference centroid (or ``ref_points``) of every element."""
        if ref_points is None:
            ref_points = np.array([[1 / 3, 1 / 3]] if self.mesh.cell_type == "tri" else [[0.0, 0.0]])
        x = self.mesh.map_points(ref_points)
        sig, _ = self.evaluate(np.arange(self.mesh.n_elements), ref_points)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["element_id", "x", "y", "s11", "s12", "s21", "s22"])
        for e in range(self.mesh.n_elements):
            for q in range(len(ref_points)):
                vals = [x[e, q, 0], x[e, q, 1], *sig[e, q].ravel()]
                w.writerow([e] + [format(v, ".10e") for v in vals])
        return buf.getvalue()


def _solve_rows(family, r, rhs):
    lu, _ = _reference_system(family, r)
    ne = rhs.shape[0]
    flat = rhs.reshape(ne * 2, -1).T
    return lu_solve(lu, flat).T.reshape(ne, 2, -1)


def _interior_rhs(mesh, elems, rule, ts, xi_fn, f_fn):
    """Interior (Psi) and divergence (Phi) right-hand sides for ``elems``."""
    pts = rule.points
    x = mesh.map_points(pts, elems)
    DF, J = mesh.jacobians(pts, elems)
    xi = xi_fn(elems, pts, x, DF)  # (ne, nq, 2, 2)
    # (xi DF^{-T} J)_i
    adjT = np.stack(
        [np.stack([DF[..., 1, 1], -DF[..., 1, 0]], -1), np.stack([-DF[..., 0, 1], DF[..., 0, 0]], -1)], -2
    )  # J DF^{-T}
    g = np.einsum("eqik,eqkj->eqij", xi, adjT)
    psi = P.evaluate(psi_space(ts.cell_type, ts.r), pts)
    parts = [np.einsum("q,eqic,qac->eia", rule.weights, g, psi)]
    if ts.family == "abf":
        phi = P.evaluate(np.array(phi_space(ts.r)), pts)
        parts.append(np.einsum("q,eq,eqi,qa->eia", rule.weights, J, f_fn(x), phi))
    return parts


def _edge_rhs(mesh, elems, erule, r, traction):
    """Edge moments ``int_e t_i P_j(t_loc) ds`` per local edge; (ne, 2, nc*(r+1))."""
    t, wt = erule.points[:, 0], erule.weights
    L = legendre_values(r, t)
    out = []
    for k in range(mesh.n_corners):
        n, length = edge_geometry(mesh, elems, k)
        tr = traction(elems, k, t, n)  # (ne, nq, 2)
        out.append(np.einsum("e,q,eqi,qj->eij", length / 2, wt, tr, L))
    return np.concatenate(out, axis=2)


def _recover(mesh, family, r, quad_degree, traction, xi_fn, f_fn, source):
    ts = build_tensor_space(family, r, mesh.cell_type)
    rule = cell_rule(mesh.cell_type, quad_degree)
    erule = edge_rule(quad_degree)
    coeffs = np.zeros((mesh.n_elements, 2, ts.row_dim))
    for el in chunks(mesh.n_elements):
        rhs = [_edge_rhs(mesh, el, erule, r, traction)]
        rhs += _interior_rhs(mesh, el, rule, ts, xi_fn, f_fn)
        coeffs[el] = _solve_rows(family, r, np.concatenate(rhs, axis=2))
    return RecoveredStress(mesh, ts, coeffs, source)


def default_family(cell_type):
    return "rt" if cell_type == "tri" else "abf"


def recover_stress(sol, family=None, variant=None):
    """Recover an H(div) stress from a hybrid solution.

    Parameters
    ----------
    family : {'rt', 'abf', 'rt-on-quad'}, optional
        Defaults to 'rt' on triangles and 'abf' on quadrilaterals.
    variant : {'hdp', 'ph'}, optional
        Interior data ``2 mu eps(u_h) + p_h I`` (HDP) or ``C eps(u_h)`` (PH).
        Defaults to the solution's method.
    """
    mesh, case, sp_ = sol.mesh, sol.case, sol.spaces
    family = family or default_family(mesh.cell_type)
    variant = variant or sol.method
    if variant == "ap":
        raise UnsupportedError("stress recovery is not available for the AP variant")
    r = sp_.r
    mu, lam = case.material.mu, case.material.lam
    npe = sp_.layout.n_per_edge

    def traction(elems, k, t, n):
        mloc = sol.m_local(elems)[:, k * npe : (k + 1) * npe]
        out = np.zeros((len(elems), len(t), 2))
        for d in (1.0, -1.0):
            sel = mesh.elem_edge_dir[elems, k] == d
            out[sel] = np.einsum("qjc,ej->eqc", eval_edge_basis(r, t, d), mloc[sel])
        neu = mesh.edge_tags[mesh.elem_edges[elems, k]] == NEUMANN
        if np.any(neu):
            xe = mesh.map_points(ref_edge_points(mesh.cell_type, k, t), elems[neu])
            out[neu] = case.t_N(xe, n[neu][:, None, :])
        return out

    def xi(elems, pts, x, DF):
        _, g = sol.u_at(elems, pts, DF)
        eps = 0.5 * (g + np.swapaxes(g, -1, -2))
        div = g[..., 0, 0] + g[..., 1, 1]
        if variant == "hdp":
            pr = sol.p_at(elems, pts, x)
        else:
            pr = lam * div
        return 2 * mu * eps + pr[..., None, None] * np.eye(2)

    return _recover(mesh, family, r, sol.quad_degree, traction, xi, case.f, variant)


def project_stress(mesh, sigma, div_sigma, family=None, r=1, quad_degree=None):
    """Canonical interpolant of an exact stress field (same local systems with exact data)."""
    family = family or default_family(mesh.cell_type)
    qd = default_quad_degree(r) if quad_degree is None else quad_degree

    def traction(elems, k, t, n):
        xe = mesh.map_points(ref_edge_points(mesh.cell_type, k, t), elems)
        return np.einsum("eqij,ej->eqi", sigma(xe), n)

    def xi(elems, pts, x, DF):
        return sigma(x)

    return _recover(mesh, family, r, qd, traction, xi, div_sigma, "exact")


# -- diagnostics -----------------------------------------------------------------------


def check_normal_jump(stress, degree=None):
    """Relative jump moments ``int_e (s1 n1 + s2 n2) . l`` per interior edge.

    Returns an array (n_interior_edges, 2(r+1)) normalized by the largest
    one-sided moment.
    """
    mesh, r = stress.mesh, stress.space.r
    erule = edge_rule(degree or 2 * (r + 4))
    t, wt = erule.points[:, 0], erule.weights
    L = legendre_values(r, t)
    mom = np.zeros((mesh.n_edges, 2, 2, r + 1))  # edge, side, component, k
    for k in range(mesh.n_corners):
        el = np.arange(mesh.n_elements)
        n, length = edge_geometry(mesh, el, k)
        ref = ref_edge_points(mesh.cell_type, k, t)
        sig, _ = stress.evaluate(el, ref)
        sn = np.einsum("eqij,ej->eqi", sig, n)
        d = mesh.elem_edge_dir[el, k]
        Ls = np.where(d[:, None, None] > 0, L[None], legendre_values(r, -t)[None])
        m = np.einsum("e,q,eqi,eqj->eij", length / 2, wt, sn, Ls)
        ge = mesh.elem_edges[el, k]
        side = (mesh.edge_elems[ge, 0] != el).astype(int)
        mom[ge, side] = m
    interior = np.flatnonzero(mesh.edge_elems[:, 1] >= 0)
    jump = (mom[interior, 0] + mom[interior, 1]).reshape(len(interior), -1)
    scale = max(np.abs(mom).max(), 1e-300)
    return jump / scale


def _mapped_test(cell_type, r):
    """Scalar test generators of the equilibrium check: P_r (triangle) or R_r (quad)."""
    from .spaces import scalar_R

    return np.array(scalar_P(r) if cell_type == "tri" else scalar_R(r))


def check_local_equilibrium(stress, f, degree=None):
    """Relative residuals ``int_K (div s_h - f) . v / (||f||_K ||v||_K)``.

    ``v`` runs over the mapped P_r (triangles) or R_r (quadrilaterals) vector
    monomials.  Returns (ne, 2, ntest).
    """
    mesh, r = stress.mesh, stress.space.r
    rule = cell_rule(mesh.cell_type, degree or 2 * (r + 4))
    tests = P.evaluate(_mapped_test(mesh.cell_type, r), rule.points)  # (nq, nt)
    out = np.zeros((mesh.n_elements, 2, tests.shape[1]))
    for el in chunks(mesh.n_elements):
        DF, J = mesh.jacobians(rule.points, el)
        x = mesh.map_points(rule.points, el)
        _, div = stress.evaluate(el, rule.points, DF, J)
        fx = f(x)
        wJ = rule.weights * J
        res = np.einsum("eq,eqi,qa->eia", wJ, div - fx, tests)
        fn = np.sqrt(np.einsum("eq,eqi->e", wJ, fx**2))
        vn = np.sqrt(np.einsum("eq,qa->ea", wJ, tests**2))
        scale = np.maximum(fn[:, None] * vn, 1e-300)
        out[el] = res / scale[:, None, :]
    return out


def check_weak_symmetry(stress, degree=None):
    """Relative moments ``int_K asym(s_h) q / (||s_h||_K ||q||_K)`` for q in P_{r-1}(K)."""
    mesh, r = stress.mesh, stress.space.r
    rule = cell_rule(mesh.cell_type, degree or 2 * (r + 4))
    mono = monomials_total(r - 1)
    out = np.zeros((mesh.n_elements, len(mono)))
    for el in chunks(mesh.n_elements):
        DF, J = mesh.jacobians(rule.points, el)
        x = mesh.map_points(rule.points, el)
        y = (x - mesh.centroids[el][:, None]) / mesh.diameters[el][:, None, None]
        q = np.stack([y[..., 0] ** a * y[..., 1] ** b for a, b in mono], -1)
        sig, _ = stress.evaluate(el, rule.points, DF, J)
        asym = sig[..., 0, 1] - sig[..., 1, 0]
        wJ = rule.weights * J
        res = np.einsum("eq,eq,eqa->ea", wJ, asym, q)
        sn = np.sqrt(np.einsum("eq,eqij->e", wJ, sig**2))
        qn = np.sqrt(np.einsum("eq,eqa->ea", wJ, q**2))
        out[el] = res / np.maximum(sn[:, None] * qn, 1e-300)
    return out


def error_Hdiv(stress, sigma, div_sigma, degree=None):
    """``(||sigma - sigma_h||^2 + ||div sigma - div sigma_h||^2)^(1/2)``."""
    mesh, r = stress.mesh, stress.space.r
    rule = cell_rule(mesh.cell_type, degree or min(2 * (r + 4) + 4, 20))
    total = 0.0
    for el in chunks(mesh.n_elements):
        DF, J = mesh.jacobians(rule.points, el)
        x = mesh.map_points(rule.points, el)
        sig, div = stress.evaluate(el, rule.points, DF, J)
        wJ = rule.weights * J
        total += np.einsum("eq,eqij->", wJ, (sigma(x) - sig) ** 2)
        total += np.einsum("eq,eqi->", wJ, (div_sigma(x) - div) ** 2)
    return float(np.sqrt(total))


def error_L2_stress(stress, sigma, degree=None):
    mesh, r = stress.mesh, stress.space.r
    rule = cell_rule(mesh.cell_type, degree or min(2 * (r + 4) + 4, 20))
    total = 0.0
    for el in chunks(mesh.n_elements):
        DF, J = mesh.jacobians(rule.points, el)
        x = mesh.map_points(rule.points, el)
        sig, _ = stress.evaluate(el, rule.points, DF, J)
        total += np.einsum("eq,eqij->", rule.weights * J, (sigma(x) - sig) ** 2)
    return float(np.sqrt(total))
