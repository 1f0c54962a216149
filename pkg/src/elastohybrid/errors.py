"""Error norms and convergence orders."""

import numpy as np

from .mesh import NEUMANN, ref_edge_points
from .quadrature import cell_rule, edge_rule
from .solver import chunks, edge_geometry
from .spaces import eval_edge_basis

ERROR_QUAD_EXTRA = 4


def error_degree(sol):
    return min(sol.quad_degree + ERROR_QUAD_EXTRA, 20)


def error_L2(sol, field="u", degree=None):
    """``||u - u_h||_0`` (``field='u'``) or ``||p - p_h||_0`` (``field='p'``)."""
    mesh, case = sol.mesh, sol.case
    rule = cell_rule(mesh.cell_type, degree or error_degree(sol))
    total = 0.0
    for el in chunks(mesh.n_elements):
        x = mesh.map_points(rule.points, el)
        _, J = mesh.jacobians(rule.points, el)
        if field == "u":
            uh, _ = sol.u_at(el, rule.points)
            diff = ((case.u(x) - uh) ** 2).sum(axis=-1)
        elif field == "p":
            ph = sol.p_at(el, rule.points, x)
            diff = (case.p(x) - ph) ** 2
        else:
            raise ValueError(f"unknown field {field!r}")
        total += np.einsum("q,eq,eq->", rule.weights, J, diff)
    return float(np.sqrt(total))


def error_Xnorm(sol, degree=None):
    """``(||u - u_h||^2 / rho^2 + sum_K ||eps(u - u_h)||^2)^(1/2)``, rho the domain diameter."""
    mesh, case = sol.mesh, sol.case
    rule = cell_rule(mesh.cell_type, degree or error_degree(sol))
    l2 = 0.0
    en = 0.0
    for el in chunks(mesh.n_elements):
        x = mesh.map_points(rule.points, el)
        DF, J = mesh.jacobians(rule.points, el)
        uh, gh = sol.u_at(el, rule.points, DF)
        wJ = rule.weights[None] * J
        l2 += np.einsum("eq,eq->", wJ, ((case.u(x) - uh) ** 2).sum(-1))
        g = case.grad_u(x) - gh
        e = 0.5 * (g + np.swapaxes(g, -1, -2))
        en += np.einsum("eq,eq->", wJ, (e**2).sum(axis=(-1, -2)))
    return float(np.sqrt(l2 / mesh.domain_diameter**2 + en))


def error_multiplier(sol, degree=None, sigma=None):
    """``(sum_K h_K sum_{e in dK, e not Neumann} ||sigma n_K - m_h||_e^2)^(1/2)``."""
    mesh, case = sol.mesh, sol.case
    sigma = case.sigma if sigma is None else sigma
    erule = edge_rule(degree or error_degree(sol))
    t, wt = erule.points[:, 0], erule.weights
    r = sol.spaces.r
    npe = sol.spaces.layout.n_per_edge
    total = 0.0
    for el in chunks(mesh.n_elements):
        mloc = sol.m_local(el)
        h = mesh.diameters[el]
        for k in range(mesh.n_corners):
            act = mesh.edge_tags[mesh.elem_edges[el, k]] != NEUMANN
            n, length = edge_geometry(mesh, el, k)
            ref = ref_edge_points(mesh.cell_type, k, t)
            xe = mesh.map_points(ref, el)
            sn = np.einsum("eqij,ej->eqi", sigma(xe), n)
            mh = np.zeros_like(sn)
            for d in (1.0, -1.0):
                sel = mesh.elem_edge_dir[el, k] == d
                lb = eval_edge_basis(r, t, d)
                mh[sel] = np.einsum("qjc,ej->eqc", lb, mloc[sel, k * npe : (k + 1) * npe])
            err = ((sn - mh) ** 2).sum(-1) @ wt * 0.5 * length
            total += np.sum(h * err * act)
    return float(np.sqrt(total))


def multiplier_flux(case, method="hdp", ap_form="consistent"):
    """Exact field ``T`` whose normal trace ``T n`` the multiplier approximates.

    HDP/PH: the stress.  AP: ``c grad(u) + (lambda + mu) div(u) I`` with
    ``c = mu`` (consistent form) or ``2 mu`` (literal form).
    """
    if method != "ap":
        return case.sigma
    mu, lam = case.material.mu, case.material.lam
    c = 2 * mu if ap_form == "literal" else mu

    def flux(x):
        g = case.grad_u(x)
        return c * g + ((lam + mu) * (g[..., 0, 0] + g[..., 1, 1]))[..., None, None] * np.eye(2)

    return flux


def orders(errors):
    """``log2(e_n / e_2n)`` for consecutive doubling levels (NaN where undefined)."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(e[:-1] / e[1:])
