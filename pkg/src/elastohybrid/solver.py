"""Assembly, static condensation and solution of the hybrid elasticity systems.

Local system on each element (unknowns: displacement ``u``, local multiplier
traces ``m`` and pressure ``p``)::

    [A  B^T  C^T] [u]   [F]
    [B  0    0  ] [m] = [G]
    [C  0    D  ] [p]   [0]

with ``a(u, v) = (2 mu eps(u), eps(v))``, ``b(v, l) = -<l, v>``,
``c(v, q) = (div v, q)``, ``D = -(1/lambda) M_p``,
``F = -(f, v) + <t_N, v>_N`` and ``G = -<l, u_D>_D``.  PH and AP drop ``p``
and use their own ``a``.  The displacement basis of every element is rotated
so that its first ``n_rigid`` functions span the kernel of ``A``; only those
coefficients, the multipliers and the pressure enter the global system.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import AssemblyError, InvalidArgumentError, SingularSystemError
from .mesh import DIRICHLET, NEUMANN, ref_edge_points
from .quadrature import cell_rule, edge_rule
from .spaces import build_spaces, eval_edge_basis

CHUNK = 1024
COND_LIMIT = 1e14
RESIDUAL_TOL = 1e-9


def default_quad_degree(r):
    """Single integration degree for assembly and recovery."""
    return 2 * (r + 4)


def chunks(n, size=CHUNK):
    for s in range(0, n, size):
        yield np.arange(s, min(n, s + size))


@dataclass
class LocalSystems:
    """Stacked local blocks for all elements (leading axis = element)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray
    G: np.ndarray  # global multiplier load, one entry per multiplier DOF


@dataclass
class CondensedSystems:
    """Blocks of the statically condensed element systems."""

    n_rigid: int
    B1: np.ndarray
    E11: np.ndarray
    E21: np.ndarray
    E22: np.ndarray
    F1: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    A22inv: np.ndarray = field(repr=False)
    B2: np.ndarray = field(repr=False)
    C2: np.ndarray = field(repr=False)
    F2: np.ndarray = field(repr=False)

    def recover_interior(self, m_loc, p_loc):
        """Non-kernel displacement coefficients from multipliers and pressure."""
        rhs = self.F2 - np.einsum("emb,em->eb", self.B2, m_loc)
        if p_loc.shape[1]:
            rhs -= np.einsum("epb,ep->eb", self.C2, p_loc)
        return np.einsum("eab,eb->ea", self.A22inv, rhs)


@dataclass
class HybridSolution:
    """Discrete solution; ``u`` and ``p`` are per-element coefficient arrays."""

    spaces: object
    case: object
    u: np.ndarray
    m: np.ndarray
    p: np.ndarray
    quad_degree: int
    info: dict = field(default_factory=dict)

    @property
    def method(self):
        return self.spaces.method

    @property
    def mesh(self):
        return self.spaces.mesh

    def m_local(self, elems=None, signed=True):
        """Multiplier coefficients per element (ne, ncorner*npe); 0 on Neumann edges.

        With ``signed`` the element orientation factor is applied, so that the
        coefficients describe the trace seen from that element.
        """
        sp_ = self.spaces
        elems = np.arange(self.mesh.n_elements) if elems is None else elems
        dofs = sp_.element_m_dofs(elems)
        vals = np.where(dofs >= 0, self.m[np.maximum(dofs, 0)], 0.0)
        if not signed:
            return vals
        sign = np.repeat(self.mesh.elem_edge_sign[elems], sp_.layout.n_per_edge, axis=1)
        return vals * sign

    def u_at(self, elems, pts, DF=None):
        val, grad = self.spaces.u_eval(elems, pts, DF)
        uh = np.einsum("eqbc,eb->eqc", val, self.u[elems])
        if grad is None:
            return uh, None
        return uh, np.einsum("eqbcd,eb->eqcd", grad, self.u[elems])

    def p_at(self, elems, pts, x=None):
        if self.spaces.n_p == 0:
            return None
        q = self.spaces.p_eval(elems, pts, x)
        return np.einsum("eqa,ea->eq", q, self.p[elems])


# -- local assembly -------------------------------------------------------------------


def edge_geometry(mesh, elems, k):
    """Outward unit normals and lengths of local edge ``k`` for ``elems``."""
    nc = mesh.n_corners
    v = mesh.vertices[mesh.elements[elems]]
    d = v[:, (k + 1) % nc] - v[:, k]
    length = np.linalg.norm(d, axis=1)
    n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    return n, length


def weighted_gram(w, X, Y=None):
    """``sum_{q,k} w[e,q] X[e,q,a,k] Y[e,q,b,k]`` via batched matmul."""
    ne, nq, na = X.shape[:3]
    Xw = (X * w.reshape(ne, nq, *([1] * (X.ndim - 2)))).reshape(ne, nq, na, -1)
    Xw = Xw.transpose(0, 2, 1, 3).reshape(ne, na, -1)
    Y = X if Y is None else Y
    nb = Y.shape[2]
    Yr = Y.reshape(ne, nq, nb, -1).transpose(0, 2, 1, 3).reshape(ne, nb, -1)
    return np.matmul(Xw, np.swapaxes(Yr, 1, 2))


def _bilinear_a(method, mu, lam, grad, wJ, ap_form):
    div = grad[..., 0, 0] + grad[..., 1, 1]
    if method == "ap":
        c = 2 * mu if ap_form == "literal" else mu
        return c * weighted_gram(wJ, grad) + (lam + mu) * weighted_gram(wJ, div)
    eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    A = 2 * mu * weighted_gram(wJ, eps)
    if method == "ph":
        A += lam * weighted_gram(wJ, div)
    return A


def assemble_local(spaces, case, quad_degree=None, ap_form="consistent"):
    """Local blocks of every element of ``spaces.mesh`` for ``case``.

    Parameters
    ----------
    ap_form : {'consistent', 'literal'}
        Shear coefficient of the AP gradient form: ``mu`` (consistent with
        ``div sigma = mu Lap u + (lambda + mu) grad div u``) or ``2 mu``.
    """
    mesh, r = spaces.mesh, spaces.r
    mu, lam = case.material.mu, case.material.lam
    method = spaces.method
    if method == "hdp" and lam <= 0:
        raise InvalidArgumentError("HDP needs lambda > 0 (the pressure block scales with 1/lambda)")
    if ap_form not in ("consistent", "literal"):
        raise InvalidArgumentError(f"ap_form must be 'consistent' or 'literal', got {ap_form!r}")
    qd = default_quad_degree(r) if quad_degree is None else quad_degree
    rule = cell_rule(mesh.cell_type, qd)
    erule = edge_rule(qd)
    t, wt = erule.points[:, 0], erule.weights
    ne, nu, npl = mesh.n_elements, spaces.n_u, spaces.n_p
    npe = spaces.layout.n_per_edge
    nc = mesh.n_corners
    A = np.zeros((ne, nu, nu))
    B = np.zeros((ne, nc * npe, nu))
    C = np.zeros((ne, npl, nu))
    D = np.zeros((ne, npl, npl))
    F = np.zeros((ne, nu))
    G = np.zeros(spaces.layout.n_dofs)

    for el in chunks(ne):
        x = mesh.map_points(rule.points, el)
        DF, J = mesh.jacobians(rule.points, el)
        if np.any(J <= 0):
            bad = el[np.flatnonzero((J <= 0).any(axis=1))[0]]
            raise AssemblyError(f"non-positive Jacobian in element {bad}")
        wJ = rule.weights[None, :] * J
        val, grad = spaces.u_eval(el, rule.points, DF)
        A[el] = _bilinear_a(method, mu, lam, grad, wJ, ap_form)
        F[el] = -np.einsum("eq,eqc,eqbc->eb", wJ, case.f(x), val, optimize=True)
        if npl:
            q = spaces.p_eval(el, rule.points, x)
            div = grad[..., 0, 0] + grad[..., 1, 1]
            C[el] = weighted_gram(wJ, q, div)
            D[el] = -weighted_gram(wJ, q) / lam

        for k in range(nc):
            gedge = mesh.elem_edges[el, k]
            tags = mesh.edge_tags[gedge]
            n, length = edge_geometry(mesh, el, k)
            ref = ref_edge_points(mesh.cell_type, k, t)
            ve, _ = spaces.u_eval(el, ref)
            xe = mesh.map_points(ref, el)
            ds = 0.5 * length[:, None] * wt[None, :]
            neu = tags == NEUMANN
            if np.any(neu):
                tn = case.t_N(xe[neu], n[neu][:, None, :])
                F[el[neu]] += np.einsum("eq,eqc,eqbc->eb", ds[neu], tn, ve[neu])
            act = ~neu
            if not np.any(act):
                continue
            direction = mesh.elem_edge_dir[el, k]
            sign = mesh.elem_edge_sign[el, k]
            for d in (1.0, -1.0):
                sel = act & (direction == d)
                if not np.any(sel):
                    continue
                lb = eval_edge_basis(r, t, d)  # (nq, npe, 2)
                blk = -np.einsum("eq,qjc,eqbc->ejb", ds[sel], lb, ve[sel], optimize=True)
                B[el[sel], k * npe : (k + 1) * npe, :] = sign[sel, None, None] * blk
                dir_ = sel & (tags == DIRICHLET)
                if np.any(dir_):
                    g = -np.einsum("eq,qjc,eqc->ej", ds[dir_], lb, case.u_D(xe[dir_]))
                    offs = spaces.layout.edge_offset[gedge[dir_]]
                    G[(offs[:, None] + np.arange(npe)).ravel()] += g.ravel()
    return LocalSystems(A, B, C, D, F, G)


# -- condensation ---------------------------------------------------------------------


def _inverse_checked(A22, elems_offset=0):
    ev = np.linalg.eigvalsh(A22)
    lo, hi = ev[:, 0], ev[:, -1]
    bad = (lo <= 0) | (hi > COND_LIMIT * np.maximum(lo, 1e-300))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0]) + elems_offset
        raise AssemblyError(f"interior stiffness block of element {k} is numerically singular")
    return np.linalg.inv(A22)


def condense(local, n_rigid):
    """Static condensation of the non-kernel displacement modes on every element."""
    nr = n_rigid
    A22 = local.A[:, nr:, nr:]
    A22inv = np.empty_like(A22)
    for el in chunks(len(A22)):
        A22inv[el] = _inverse_checked(A22[el], el[0])
    B1, B2 = local.B[:, :, :nr], local.B[:, :, nr:]
    C2 = local.C[:, :, nr:]
    F1, F2 = local.F[:, :nr], local.F[:, nr:]
    AiB = np.einsum("eab,emb->eam", A22inv, B2)
    AiC = np.einsum("eab,epb->eap", A22inv, C2)
    AiF = np.einsum("eab,eb->ea", A22inv, F2)
    E11 = -np.einsum("ema,ean->emn", B2, AiB)
    E21 = -np.einsum("epa,ean->epn", C2, AiB)
    E22 = local.D - np.einsum("epa,eaq->epq", C2, AiC)
    H1 = -np.einsum("ema,ea->em", B2, AiF)
    H2 = -np.einsum("epa,ea->ep", C2, AiF)
    return CondensedSystems(nr, B1, E11, E21, E22, F1, H1, H2, A22inv, B2, C2, F2)


# -- global assembly --------------------------------------------------------------------


def _scatter(blocks, dofs, n):
    """Sum element matrices ``blocks`` (ne, k, k) with global indices ``dofs`` (ne, k); -1 drops."""
    ne, k = dofs.shape
    I = np.broadcast_to(dofs[:, :, None], (ne, k, k)).ravel()
    Jc = np.broadcast_to(dofs[:, None, :], (ne, k, k)).ravel()
    V = blocks.ravel()
    keep = (I >= 0) & (Jc >= 0) & (V != 0)
    return sp.csr_matrix((V[keep], (I[keep], Jc[keep])), shape=(n, n))


def _scatter_vec(vecs, dofs, n):
    keep = dofs.ravel() >= 0
    return np.bincount(dofs.ravel()[keep], weights=vecs.ravel()[keep], minlength=n)


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_u: int  # number of displacement unknowns (kernel or full)
    n_m: int
    n_p: int
    condensed: bool


def global_dofs(spaces, condensed=True):
    """Global indices of the local unknowns (u-part, m-part, p-part)."""
    mesh = spaces.mesh
    ne = mesh.n_elements
    nu = spaces.n_rigid if condensed else spaces.n_u
    n_uglob = ne * nu
    udofs = np.arange(n_uglob).reshape(ne, nu)
    md = spaces.element_m_dofs()
    mdofs = np.where(md >= 0, md + n_uglob, -1)
    n_m = spaces.layout.n_dofs
    pdofs = n_uglob + n_m + np.arange(ne * spaces.n_p).reshape(ne, spaces.n_p)
    return udofs, mdofs, pdofs, n_uglob, n_m, ne * spaces.n_p


def assemble_global(spaces, local, cond=None):
    """Sparse symmetric global system; condensed if ``cond`` is given."""
    udofs, mdofs, pdofs, nU, nM, nP = global_dofs(spaces, cond is not None)
    n = nU + nM + nP
    ne = spaces.mesh.n_elements
    if cond is not None:
        nr, nm, npl = cond.n_rigid, cond.E11.shape[1], cond.E22.shape[1]
        k = nr + nm + npl
        M = np.zeros((ne, k, k))
        M[:, nr : nr + nm, :nr] = cond.B1
        M[:, :nr, nr : nr + nm] = np.swapaxes(cond.B1, 1, 2)
        M[:, nr : nr + nm, nr : nr + nm] = cond.E11
        M[:, nr + nm :, nr : nr + nm] = cond.E21
        M[:, nr : nr + nm, nr + nm :] = np.swapaxes(cond.E21, 1, 2)
        M[:, nr + nm :, nr + nm :] = cond.E22
        rhs_loc = np.concatenate([cond.F1, cond.H1, cond.H2], axis=1)
    else:
        nu, nm, npl = local.A.shape[1], local.B.shape[1], local.C.shape[1]
        k = nu + nm + npl
        M = np.zeros((ne, k, k))
        M[:, :nu, :nu] = local.A
        M[:, nu : nu + nm, :nu] = local.B
        M[:, :nu, nu : nu + nm] = np.swapaxes(local.B, 1, 2)
        M[:, nu + nm :, :nu] = local.C
        M[:, :nu, nu + nm :] = np.swapaxes(local.C, 1, 2)
        M[:, nu + nm :, nu + nm :] = local.D
        rhs_loc = np.concatenate([local.F, np.zeros((ne, nm)), np.zeros((ne, npl))], axis=1)
    dofs = np.concatenate([udofs, mdofs, pdofs], axis=1)
    mat = _scatter(M, dofs, n)
    rhs = _scatter_vec(rhs_loc, dofs, n)
    rhs[nU : nU + nM] += local.G
    return GlobalSystem(mat, rhs, nU, nM, nP, cond is not None)


def solve_global(system):
    """Sparse direct solve with a relative residual check."""
    A = system.matrix.tocsc()
    try:
        lu = splu(A)
        x = lu.solve(system.rhs)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed ({exc}); check that some edge is Dirichlet") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite solution; the global system is singular")
    bn = np.linalg.norm(system.rhs)
    res = np.linalg.norm(A @ x - system.rhs) / (bn if bn > 0 else 1.0)
    if res > RESIDUAL_TOL:
        # one step of iterative refinement before giving up
        x = x + lu.solve(system.rhs - A @ x)
        res = np.linalg.norm(A @ x - system.rhs) / (bn if bn > 0 else 1.0)
    if res > RESIDUAL_TOL:
        raise SingularSystemError(f"relative residual {res:.2e} exceeds {RESIDUAL_TOL:g}")
    return x, res


def solve(mesh, case, method="hdp", r=1, pressure="unmapped", quad_degree=None, condensed=True,
          ap_form="consistent", spaces=None):
    """Assemble and solve one hybrid problem.

    Returns
    -------
    HybridSolution
    """
    if not np.any(mesh.edge_tags == DIRICHLET):
        raise SingularSystemError("no Dirichlet edges: the problem is only defined up to rigid motions")
    if spaces is None:
        spaces = build_spaces(mesh, method, r, pressure)
    qd = default_quad_degree(spaces.r) if quad_degree is None else quad_degree
    local = assemble_local(spaces, case, qd, ap_form)
    ne = mesh.n_elements
    if condensed:
        cond = condense(local, spaces.n_rigid)
        system = assemble_global(spaces, local, cond)
        x, res = solve_global(system)
        nU, nM = system.n_u, system.n_m
        u1 = x[:nU].reshape(ne, spaces.n_rigid)
        m = x[nU : nU + nM]
        p = x[nU + nM :].reshape(ne, spaces.n_p)
        sol = HybridSolution(spaces, case, np.zeros((ne, spaces.n_u)), m, p, qd)
        u2 = cond.recover_interior(sol.m_local(signed=False), p)
        sol.u = np.concatenate([u1, u2], axis=1)
    else:
        system = assemble_global(spaces, local)
        x, res = solve_global(system)
        nU, nM = system.n_u, system.n_m
        sol = HybridSolution(spaces, case, x[:nU].reshape(ne, spaces.n_u), x[nU : nU + nM],
                             x[nU + nM :].reshape(ne, spaces.n_p), qd)
    sol.info.update(residual=res, n_unknowns=system.matrix.shape[0])
    return sol
