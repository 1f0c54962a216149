import numpy as np
import pytest

from elastohybrid import _poly as P
from elastohybrid.exceptions import UnsupportedError
from elastohybrid.mesh import ElementMap, generate_mesh
from elastohybrid.quadrature import edge_rule
from elastohybrid.spaces import (
    SpaceDescriptor,
    barycentric,
    build_hdp_spaces,
    build_ph_spaces,
    build_spaces,
    displacement_reference,
    eval_basis,
    eval_edge_basis,
    rigid_body_values,
    scalar_PS,
    v0_triangle,
    vectorize,
)

RNG = np.random.default_rng(0)
TRI_PTS = RNG.dirichlet([1, 1, 1], size=60)[:, :2]
QUAD_PTS = RNG.uniform(-1, 1, size=(60, 2))


def rank(basis, pts):
    v = P.evaluate(basis, pts).reshape(len(pts), len(basis), -1)
    return np.linalg.matrix_rank(np.concatenate(list(v.transpose(2, 0, 1)), axis=0), tol=1e-10)


def unit_tri():
    return ElementMap.from_vertices(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))


@pytest.mark.parametrize("r", range(5))
def test_scalar_dimensions(r):
    assert SpaceDescriptor("P", r, "tri").dim == (r + 1) * (r + 2) // 2
    assert SpaceDescriptor("Q", r, "quad").dim == (r + 1) ** 2
    for m, cell in ((3, "tri"), (4, "quad")):
        assert SpaceDescriptor("EdgeE", r, cell, "vector2").dim == 2 * m * (r + 1)
    assert SpaceDescriptor("RigidBody", 0, "tri").dim == 3


def test_p1_at_barycenter():
    vals, _ = eval_basis(SpaceDescriptor("P", 1, "tri"), unit_tri(), [[1 / 3, 1 / 3]])
    # P1 monomials 1, x, y at the barycenter; barycentric combination gives 1/3 each
    lam = P.evaluate(np.array(barycentric()), np.array([[1 / 3, 1 / 3]]))[0]
    assert np.allclose(lam, 1 / 3)
    assert vals.shape == (1, 3)


def test_v0_triangle_zeros():
    v0 = v0_triangle(2)
    pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5], [1 / 3, 1 / 3]])
    assert np.abs(P.evaluate(v0, pts)).max() < 1e-15
    assert np.abs(P.evaluate(v0, TRI_PTS)).max() > 1e-3


@pytest.mark.parametrize(
    "cell, r, bubbles, dim",
    [("tri", 1, True, 16), ("tri", 2, True, 24), ("tri", 1, False, 14), ("tri", 2, False, 20), ("tri", 0, False, 6),
     ("quad", 1, False, 20), ("quad", 2, False, 34), ("quad", 0, False, 10)],
)
def test_displacement_dimensions(cell, r, bubbles, dim):
    basis = displacement_reference(cell, r, bubbles)
    assert len(basis) == dim
    assert rank(basis, TRI_PTS if cell == "tri" else QUAD_PTS) == dim


@pytest.mark.parametrize("r", [1, 2])
def test_stokes_space_included(r):
    x = displacement_reference("tri", r, True)
    stokes = vectorize(scalar_PS(r + 1))
    both = np.concatenate([x, stokes])
    assert rank(both, TRI_PTS) == len(x)


@pytest.mark.parametrize("family, cell", [("triangular", "tri"), ("square", "quad")])
def test_hdp_space_counts(family, cell):
    mesh = generate_mesh(family, 2)
    sp = build_hdp_spaces(1, mesh)
    assert sp.n_u == (16 if cell == "tri" else 20)
    assert sp.n_p == 3 and sp.layout.n_per_edge == 4


def test_ph_ap_space_counts():
    mesh = generate_mesh("triangular", 2)
    assert build_ph_spaces(1, mesh).n_u == 14
    assert build_ph_spaces(2, mesh).n_u == 20
    ap = build_spaces(mesh, "ap", 0)
    assert ap.n_u == 6 and ap.layout.n_per_edge == 2 and ap.n_rigid == 2


def test_neumann_edges_have_no_multiplier():
    mesh = generate_mesh("square", 3, boundary=lambda mid: "D" if mid[1] < 1e-12 else "N")
    sp = build_hdp_spaces(1, mesh)
    neu = mesh.edge_tags == 2
    assert np.all(sp.layout.edge_offset[neu] == -1)
    assert sp.layout.n_dofs == (~neu).sum() * 4
    dofs = sp.element_m_dofs()
    assert np.all((dofs < 0) == np.repeat(neu[mesh.elem_edges], 4, axis=1))


@pytest.mark.parametrize(
    "method, r, kw",
    [("hdp", 0, {}), ("ph", 0, {}), ("hdp", 3, {}), ("ap", 3, {}), ("bogus", 1, {}), ("hdp", 1, {"pressure": "x"})],
)
def test_invalid_spaces(method, r, kw):
    with pytest.raises(ValueError):
        build_spaces(generate_mesh("square", 2), method, r, **kw)


def test_ap_refuses_neumann():
    mesh = generate_mesh("square", 2, boundary=lambda mid: "N" if mid[0] < 1e-12 else "D")
    with pytest.raises(UnsupportedError):
        build_spaces(mesh, "ap", 0)


def test_unsupported_descriptor():
    with pytest.raises(UnsupportedError):
        SpaceDescriptor("P", 1, "hex")
    with pytest.raises(UnsupportedError):
        eval_basis(SpaceDescriptor("PPh", 2, "quad"), unit_tri(), [[0.1, 0.1]])


def test_rigid_modes():
    x = RNG.uniform(-2, 2, size=(10, 2))
    h = 1e-6
    rot = lambda p: rigid_body_values(p, np.zeros(2))[..., 2, :]
    grad = np.stack([(rot(x + [h, 0]) - rot(x - [h, 0])) / (2 * h), (rot(x + [0, h]) - rot(x - [0, h])) / (2 * h)], -1)
    assert np.abs(grad + np.swapaxes(grad, -1, -2)).max() < 1e-9
    modes = rigid_body_values(x, np.zeros(2))  # (10, 3, 2)
    A = modes.transpose(1, 0, 2).reshape(3, -1).T
    assert np.linalg.matrix_rank(A) == 3
    target = np.stack([0.3 - 0.7 * x[:, 1], -1.2 + 0.7 * x[:, 0]], -1).ravel()
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    assert np.abs(A @ coef - target).max() < 1e-12


def test_element_basis_spans_rigid_modes():
    mesh = generate_mesh("trapezoidal", 2)
    sp = build_hdp_spaces(1, mesh)
    pts = QUAD_PTS[:20]
    vals, _ = sp.u_eval(np.arange(mesh.n_elements), pts, mesh.jacobians(pts)[0])
    x = mesh.map_points(pts)
    modes = rigid_body_values(x, mesh.centroids[:, None, :])
    T = sp.rigid_transform()
    # the leading columns are the rigid modes expressed in the basis
    for e in range(mesh.n_elements):
        lead = vals[e, :, :3]
        coef = np.linalg.lstsq(lead.transpose(1, 0, 2).reshape(3, -1).T, modes[e].transpose(1, 0, 2).reshape(3, -1).T,
                               rcond=None)[0]
        assert np.allclose(lead.transpose(1, 0, 2).reshape(3, -1).T @ coef, modes[e].transpose(1, 0, 2).reshape(3, -1).T)
        assert np.linalg.matrix_rank(T[e]) == sp.n_u


def test_edge_basis_orthogonality_and_orientation():
    rule = edge_rule(10)
    t, w = rule.points[:, 0], rule.weights
    for r in range(3):
        b = eval_edge_basis(r, t)
        G = np.einsum("q,qic,qjc->ij", w, b, b)
        assert np.abs(G - np.diag(np.diag(G))).max() < 1e-14
        assert b.shape == (len(t), 2 * (r + 1), 2)
    const = eval_edge_basis(0, t)
    assert np.allclose(const[:, 0], [1, 0]) and np.allclose(const[:, 1], [0, 1])
    # the other element reads the same basis through the reversed parameter; the sign is a separate factor
    flipped = eval_edge_basis(2, -t, direction=-1.0)
    assert np.allclose(flipped, eval_edge_basis(2, t))
    assert np.allclose(eval_edge_basis(2, t, sign=-1.0), -eval_edge_basis(2, t))


def test_pressure_basis_orthonormal():
    from elastohybrid.quadrature import cell_rule

    for pressure in ("unmapped", "mapped"):
        mesh = generate_mesh("trapezoidal", 4)
        sp = build_hdp_spaces(2, mesh, pressure)
        rule = cell_rule("quad", 10)
        el = np.arange(mesh.n_elements)
        _, J = mesh.jacobians(rule.points)
        v = sp.p_eval(el, rule.points)
        G = np.einsum("q,eq,eqa,eqb->eab", rule.weights, J, v, v)
        assert np.abs(G - np.eye(6)).max() < 1e-12
