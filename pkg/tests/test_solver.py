import numpy as np
import pytest

from elastohybrid.cases import ManufacturedCase, Material, case_convergence, case_locking, polynomial_case
from elastohybrid.checks import check_condensation, check_patch
from elastohybrid.errors import error_L2, error_multiplier, multiplier_flux
from elastohybrid.exceptions import InvalidArgumentError, SingularSystemError
from elastohybrid.mesh import generate_mesh
from elastohybrid.solver import assemble_global, assemble_local, condense, solve
from elastohybrid.spaces import build_spaces


def zero_case(boundary=lambda mid: "D"):
    z = lambda x: np.zeros(x.shape[:-1] + (2,))
    zg = lambda x: np.zeros(x.shape[:-1] + (2, 2))
    return ManufacturedCase("zero", Material(1.0, 0.3), ((0.0, 1.0), (0.0, 1.0)), boundary, z, zg, z)


def mixed(mid):
    return "D" if min(abs(mid[1]), abs(mid[1] - 1)) < 1e-12 else "N"


@pytest.mark.parametrize("r", [1, 2])
@pytest.mark.parametrize("family", ["triangular", "square"])
def test_patch_degree_r_plus_1(r, family):
    res = check_patch(r, family)
    assert res.passed, res


@pytest.mark.parametrize("family", ["triangular", "square", "trapezoidal"])
@pytest.mark.parametrize("method, r", [("hdp", 1), ("hdp", 2), ("ph", 1)])
def test_linear_patch_any_mesh(family, method, r):
    case = polynomial_case(1, boundary=mixed, seed=4)
    mesh = generate_mesh(family, 4, case.domain, case.boundary)
    sol = solve(mesh, case, method, r)
    assert error_L2(sol, "u") < 1e-10
    assert error_multiplier(sol) < 1e-10
    if method == "hdp":
        assert error_L2(sol, "p") < 1e-10


@pytest.mark.parametrize("family", ["triangular", "square", "trapezoidal"])
def test_linear_patch_ap(family):
    case = polynomial_case(1, seed=5)
    mesh = generate_mesh(family, 4, case.domain, case.boundary)
    sol = solve(mesh, case, "ap", 0)
    assert error_L2(sol, "u") < 1e-10
    assert error_multiplier(sol, sigma=multiplier_flux(case, "ap")) < 1e-10


def test_single_element_linear_patch():
    case = polynomial_case(1, material=Material(2.0, 5.0), seed=1)
    for family in ("triangular", "square"):
        mesh = generate_mesh(family, 1, case.domain, case.boundary)
        sol = solve(mesh, case, "hdp", 1)
        assert error_L2(sol, "u") < 1e-12


@pytest.mark.parametrize("family", ["triangular", "square", "trapezoidal"])
@pytest.mark.parametrize("method, r", [("hdp", 1), ("hdp", 2), ("ph", 1), ("ph", 2), ("ap", 0), ("ap", 1)])
def test_condensation_equivalence(family, method, r):
    res = check_condensation(method, r, family)
    assert res.passed, res


def test_condensed_vs_dense_oracle():
    case = case_convergence()
    mesh = generate_mesh("square", 2, case.domain, case.boundary)
    spaces = build_spaces(mesh, "hdp", 1)
    full = assemble_global(spaces, assemble_local(spaces, case))
    x = np.linalg.solve(full.matrix.toarray(), full.rhs)
    sol = solve(mesh, case, "hdp", 1, condensed=True)
    nU, nM = full.n_u, full.n_m
    assert np.abs(sol.u.ravel() - x[:nU]).max() < 1e-10
    assert np.abs(sol.m - x[nU : nU + nM]).max() < 1e-10
    assert np.abs(sol.p.ravel() - x[nU + nM :]).max() < 1e-10


def test_global_counts_2x2():
    case = case_locking(3)
    mesh = generate_mesh("square", 2, case.domain, case.boundary)
    spaces = build_spaces(mesh, "hdp", 1)
    local = assemble_local(spaces, case)
    cond = assemble_global(spaces, local, condense(local, 3))
    full = assemble_global(spaces, local)
    # 4 cells x 3 rigid modes, 12 edges x 4 multiplier modes, 4 cells x 3 pressures
    assert cond.matrix.shape == (12 + 48 + 12,) * 2
    assert full.matrix.shape == (4 * 20 + 48 + 12,) * 2


@pytest.mark.parametrize("condensed", [True, False])
@pytest.mark.parametrize("method, r", [("hdp", 1), ("ph", 2), ("ap", 0)])
def test_global_symmetry(condensed, method, r):
    case = case_locking(4)
    mesh = generate_mesh("trapezoidal", 4, case.domain, case.boundary)
    spaces = build_spaces(mesh, method, r)
    local = assemble_local(spaces, case)
    M = assemble_global(spaces, local, condense(local, spaces.n_rigid) if condensed else None).matrix
    assert abs(M - M.T).max() <= 1e-12 * abs(M).max()


def test_rigid_columns_of_A_vanish():
    case = case_convergence()
    mesh = generate_mesh("trapezoidal", 2, case.domain, case.boundary)
    for method, r in (("hdp", 1), ("ph", 2)):
        local = assemble_local(build_spaces(mesh, method, r), case)
        assert np.abs(local.A[:, :, :3]).max() < 1e-12 * np.abs(local.A).max()


def test_local_kernel_dimensions():
    case = case_locking(2)
    mesh = generate_mesh("square", 1, case.domain, case.boundary)
    for method, r, kernel in (("ph", 1, 3), ("hdp", 2, 3), ("ap", 0, 2)):
        A = assemble_local(build_spaces(mesh, method, r), case).A[0]
        ev = np.linalg.eigvalsh(A)
        assert np.sum(ev < 1e-10 * ev[-1]) == kernel


def test_B_constant_multiplier_unit_square():
    case = zero_case()
    mesh = generate_mesh("square", 1)
    spaces = build_spaces(mesh, "hdp", 1)
    B = assemble_local(spaces, case).B[0]  # (4 edges * 4, nu)
    x_mode = [k * 4 for k in range(4)]  # P_0 e_x on each edge
    # the first displacement basis function is the translation (1, 0)
    assert np.allclose(np.abs(B[x_mode, 0]), 1.0)
    assert abs(np.abs(B[x_mode, 0]).sum() - 4.0) < 1e-13
    assert np.allclose(B[[k * 4 + 2 for k in range(4)], 0], 0.0)


def test_condense_trivial_identities():
    case = zero_case()
    mesh = generate_mesh("triangular", 2)
    spaces = build_spaces(mesh, "hdp", 1)
    local = assemble_local(spaces, case)
    cond = condense(local, 3)
    assert np.all(cond.H1 == 0) and np.all(cond.H2 == 0)
    case = case_convergence()
    local = assemble_local(spaces, case)
    cond = condense(local, 3)
    m0 = np.zeros(cond.B2.shape[:2])
    p0 = np.zeros(cond.C2.shape[:2])
    expect = np.einsum("eab,eb->ea", cond.A22inv, cond.F2)
    assert np.allclose(cond.recover_interior(m0, p0), expect)


def test_zero_data_zero_solution():
    mesh = generate_mesh("trapezoidal", 4)
    sol = solve(mesh, zero_case(mixed), "hdp", 2)
    assert np.abs(sol.u).max() == 0 and np.abs(sol.m).max() == 0 and np.abs(sol.p).max() == 0


def test_no_dirichlet_is_singular():
    mesh = generate_mesh("square", 2, boundary=lambda mid: "N")
    with pytest.raises(SingularSystemError):
        solve(mesh, zero_case(lambda mid: "N"), "hdp", 1)


def test_hdp_requires_positive_lambda():
    case = polynomial_case(1, material=Material(1.0, 0.0))
    mesh = generate_mesh("square", 2)
    with pytest.raises(InvalidArgumentError):
        solve(mesh, case, "hdp", 1)


def test_residual_reported():
    case = case_convergence()
    mesh = generate_mesh("triangular", 4, case.domain, case.boundary)
    sol = solve(mesh, case, "hdp", 1)
    assert sol.info["residual"] < 1e-9


def test_table1_first_level():
    case = case_convergence()
    mesh = generate_mesh("triangular", 8, case.domain, case.boundary)
    sol = solve(mesh, case, "hdp", 1)
    assert error_L2(sol, "u") == pytest.approx(7.20e-4, rel=0.05)
