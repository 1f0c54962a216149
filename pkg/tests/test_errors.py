import math

import numpy as np
import pytest

from elastohybrid.cases import (
    ManufacturedCase,
    Material,
    case_convergence,
    case_locking,
    consistency_residual,
    locking_lambda,
    locking_source_as_printed,
    polynomial_case,
)
from elastohybrid.errors import error_L2, error_multiplier, error_Xnorm, orders
from elastohybrid.exceptions import InvalidArgumentError
from elastohybrid.mesh import generate_mesh
from elastohybrid.solver import HybridSolution, solve
from elastohybrid.spaces import build_spaces
from elastohybrid.studies import CSV_COLUMNS, ConvergenceReport, convergence_study, locking_study

RNG = np.random.default_rng(0)


def test_convergence_case_values():
    c = case_convergence()
    assert np.allclose(c.u(np.array([0.5, 0.5])), [1.0, 1.0])
    x = RNG.uniform(0, 1, size=(20, 2))
    expect = np.pi * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) + np.pi * np.sin(np.pi * x[:, 0]) * np.cos(
        np.pi * x[:, 1])
    assert np.allclose(c.div_u(x), expect)
    assert abs(c.div_u(np.array([0.5, 0.5]))) < 1e-15
    assert (c.material.mu, c.material.lam) == (1.0, 0.3)
    assert c.boundary(np.array([0.5, 0.0])) == "D" and c.boundary(np.array([0.5, 1.0])) == "D"
    assert c.boundary(np.array([0.0, 0.5])) == "N" and c.boundary(np.array([1.0, 0.5])) == "N"


def test_consistency_oracles():
    x1 = RNG.uniform(0, 1, size=(100, 2))
    x2 = RNG.uniform(-1, 1, size=(100, 2))
    assert consistency_residual(case_convergence(), x1) < 1e-6
    for j in range(2, 9):
        for rule in ("printed", "derived"):
            assert consistency_residual(case_locking(j, rule), x2) < 1e-6


def test_printed_locking_source_is_inconsistent():
    # finding: the literature source term is not div sigma of the stated displacement, under either lambda rule
    x = RNG.uniform(-1, 1, size=(100, 2))
    for rule in ("printed", "derived"):
        case = case_locking(2, rule)
        assert consistency_residual(case, x, f=locking_source_as_printed(2, rule)) > 0.5


def test_oracle_detects_perturbed_source():
    case = case_convergence()
    x = RNG.uniform(0, 1, size=(100, 2))
    assert consistency_residual(case, x, f=lambda p: case.f(p) * (1 + 1e-4)) > 1e-6


def test_locking_case():
    assert locking_lambda(2) == pytest.approx(24.5)
    assert locking_lambda(2, "derived") == pytest.approx(49.0)
    c = case_locking(2)
    t = np.linspace(-1, 1, 10)
    edges = np.concatenate([np.stack([t, -np.ones(10)], 1), np.stack([t, np.ones(10)], 1),
                            np.stack([-np.ones(10), t], 1), np.stack([np.ones(10), t], 1)])
    assert np.abs(c.u(edges)).max() < 1e-13
    assert c.domain == ((-1.0, 1.0), (-1.0, 1.0))
    for bad in (1, 9, 2.5):
        with pytest.raises(InvalidArgumentError):
            case_locking(bad)


def test_material():
    m = Material.from_young_poisson(1.0, 0.25)
    assert m.mu == pytest.approx(0.4) and m.lam == pytest.approx(0.4)
    with pytest.raises(InvalidArgumentError):
        Material(0.0, 1.0)


def const_case(value):
    u = lambda x: np.broadcast_to(np.asarray(value, dtype=float), x.shape[:-1] + (2,)).copy()
    zg = lambda x: np.zeros(x.shape[:-1] + (2, 2))
    z = lambda x: np.zeros(x.shape[:-1] + (2,))
    return ManufacturedCase("const", Material(1.0, 0.3), ((0.0, 1.0), (0.0, 1.0)), lambda mid: "D", u, zg, z)


def blank_solution(mesh, case, method="hdp", r=1):
    spaces = build_spaces(mesh, method, r)
    ne = mesh.n_elements
    return HybridSolution(spaces, case, np.zeros((ne, spaces.n_u)), np.zeros(spaces.layout.n_dofs),
                          np.zeros((ne, spaces.n_p)), 10)


def test_norm_of_one():
    mesh = generate_mesh("square", 3)
    sol = blank_solution(mesh, const_case([1.0, 0.0]))
    assert error_L2(sol, "u") == pytest.approx(1.0, abs=1e-13)


def test_multiplier_norm_constant_on_unit_square():
    mesh = generate_mesh("square", 1)
    sol = blank_solution(mesh, const_case([0.0, 0.0]))
    npe = sol.spaces.layout.n_per_edge
    for k in range(4):
        off = sol.spaces.layout.edge_offset[mesh.elem_edges[0, k]]
        sol.m[off] = mesh.elem_edge_sign[0, k]  # element sees (1, 0) on every edge
    assert np.allclose(sol.m_local()[0, ::npe], 1.0)
    assert error_multiplier(sol) == pytest.approx(math.sqrt(math.sqrt(2) * 4), rel=1e-13)


def test_exact_field_zero_error():
    case = polynomial_case(2, seed=3)
    mesh = generate_mesh("triangular", 2, case.domain, case.boundary)
    sol = solve(mesh, case, "hdp", 1)
    for e in (error_L2(sol, "u"), error_L2(sol, "p"), error_multiplier(sol), error_Xnorm(sol)):
        assert e < 1e-10


def test_xnorm_dominates_scaled_l2():
    case = case_convergence()
    mesh = generate_mesh("trapezoidal", 4, case.domain, case.boundary)
    sol = solve(mesh, case, "hdp", 1)
    assert error_Xnorm(sol) >= error_L2(sol, "u") / mesh.domain_diameter


def test_synthetic_orders():
    n = np.array([8, 16, 32, 64])
    for k in (1.0, 2.0, 3.5):
        assert np.allclose(orders(3.0 * n**-k), k, atol=1e-12)


def test_report_requires_doubling():
    rep = ConvergenceReport("x", [], [])
    rep.add(8, 0.1, u=1.0)
    rep.add(24, 0.05, u=0.5)
    with pytest.raises(InvalidArgumentError):
        rep.orders("u")
    with pytest.raises(InvalidArgumentError):
        convergence_study(n_list=(8, 12))


def test_convergence_study_small():
    rep = convergence_study("hdp", "triangular", 1, (4, 8))
    text = rep.to_csv().splitlines()
    assert text[0].split(",") == CSV_COLUMNS
    assert len(text) == 3
    assert all(e >= 0 for k in ("u", "m", "p", "sigma", "x") for e in rep.errors[k])
    assert 2.5 < rep.orders("u")[0] < 3.5
    md = rep.to_markdown()
    assert md.count("\n| ") == 3


def test_ap_convergence_on_dirichlet_case():
    rep = convergence_study("ap", "triangular", 0, (4, 8, 16), case=case_locking(2))
    assert np.isnan(rep.errors["sigma"]).all() and np.isnan(rep.errors["p"]).all()
    assert rep.orders("u")[-1] > 1.5


def test_locking_study_and_plot_data():
    rep = locking_study("hdp", "square", 1, [2, 5, 8], n=4)
    plot = rep.plot_csv().strip().splitlines()
    assert plot[0].split(",")[0] == "j" and len(plot[0].split(",")) == 1 + len(rep.fields())
    vals = np.array([[float(v) for v in row.split(",")] for row in plot[1:]])
    assert np.all(np.isfinite(vals))
    assert rep.flatness("u") < 2


def test_ph_multiplier_grows_with_j():
    rep = locking_study("ph", "triangular", 1, [2, 4, 6, 8], n=8)
    m = np.array(rep.errors["m"])
    assert np.all(np.diff(m) >= -1e-12 * m[:-1]) and m[-1] > m[0]
    rep = locking_study("ph", "trapezoidal", 1, [2, 4, 6, 8], n=8)
    s = np.array(rep.errors["sigma"])
    assert np.all(np.diff(s) > 0)
