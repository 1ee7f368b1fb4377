import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import COMPETITION_SETS, COOPERATIVE_SETS, coeffs
from lvqsd.errors import DomainError, StepUnstable, ValidationError
from lvqsd.model import AxisModel, DirichletHarness, KolmogorovModel, validate_params
from lvqsd.spectral import (
    Grid,
    auto_grid,
    build_operator,
    diffusion_generator,
    evolve_conditioned_law,
    fit_exponential_rate,
    fit_tv_decay,
    mollified_point_mass,
    smallest_eigenpairs,
    solve_qsd,
    solve_qsd_1d,
    solve_qsd_2d,
    tv_distance,
)
from oracles import discrete_dirichlet_eigs

# frozen from the shooting oracle (tests/oracles.py::shoot_axis_eigenvalue), all-ones axis
AXIS_LAMBDA1 = 0.26097559680015125
AXIS_LAMBDA2 = 1.8315765031168543


def km(c):
    return KolmogorovModel(validate_params(c))


@pytest.fixture(scope="module")
def axis_result():
    return solve_qsd_1d(validate_params(coeffs()), 1)


# -- grid ------------------------------------------------------------------------

def test_grid_spacing_and_nodes():
    g = Grid.box(2, 0.5, 4.5, 9)
    assert g.h == (0.4, 0.4) and g.shape == (9, 9) and g.size == 81
    assert g.nodes().shape == (9, 9, 2)
    assert np.allclose(np.diff(g.axis_nodes(0)), 0.4)
    assert g.axis_nodes(0, with_boundary=True)[[0, -1]].tolist() == [0.5, 4.5]


def test_grid_round_trip_and_derivations():
    g = Grid.box(1, 1e-3, 8.0, 100)
    assert Grid.from_dict(g.to_dict()) == g
    e = g.extended()
    assert e.h == pytest.approx(g.h) and e.L_hi[0] > g.L_hi[0]
    assert g.lowered().eps_lo[0] == pytest.approx(5e-4)


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid.box(3, 0.1, 1.0, 10)
    with pytest.raises(ValidationError):
        Grid.box(1, 2.0, 1.0, 10)
    with pytest.raises(ValidationError):
        solve_qsd(DirichletHarness(1), Grid.box(1, 0.0, math.pi, 5))


def test_auto_grid_brackets_the_well():
    g = auto_grid(km(coeffs()), n=50)
    assert 3.0 < g.L_hi[0] < 12.0 and g.eps_lo == (1e-3, 1e-3)


# -- operator --------------------------------------------------------------------

def test_three_point_stencil():
    A = build_operator(DirichletHarness(1), Grid.box(1, 0.0, math.pi, 3)).toarray()
    assert np.allclose(np.diag(A), 16 / math.pi**2, rtol=1e-14)
    assert np.allclose(np.diag(A, 1), -8 / math.pi**2, rtol=1e-14)
    assert A[0, 2] == 0.0


@pytest.mark.parametrize("disc", ["ground_state", "pointwise"])
@pytest.mark.parametrize("c", [coeffs(), COMPETITION_SETS["gamma2"], COOPERATIVE_SETS["c06"]])
def test_operator_exactly_symmetric(c, disc):
    A = build_operator(km(c), Grid.box(2, 0.05, 5.0, 20), disc)
    assert (A - A.T).count_nonzero() == 0


def test_ghost_nodes_need_positive_eps():
    with pytest.raises(DomainError, match="eps_lo"):
        build_operator(AxisModel(validate_params(coeffs()), 1), Grid.box(1, 0.0, 5.0, 20))


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        build_operator(km(coeffs()), Grid.box(1, 0.1, 5.0, 20))


def test_harness_matches_exact_discrete_spectrum():
    # oracle: closed-form eigenvalues of the three-point stencil
    for n in (20, 57):
        vals, _ = smallest_eigenpairs(build_operator(DirichletHarness(1),
                                                     Grid.box(1, 0.0, math.pi, n)), k=3)
        assert np.allclose(vals, discrete_dirichlet_eigs(n, math.pi, 3), rtol=1e-10)


def test_pointwise_and_ground_state_agree_for_flat_potential():
    g = Grid.box(1, 0.0, math.pi, 30)
    a = build_operator(DirichletHarness(1), g, "ground_state")
    b = build_operator(DirichletHarness(1), g, "pointwise")
    assert abs(a - b).max() < 1e-12


# -- eigen-solver ------------------------------------------------------------------

def test_diagonal_example():
    vals, vecs = smallest_eigenpairs(sp.diags([3.0, 1.0, 2.0]), k=2)
    assert np.allclose(vals, [1.0, 2.0])
    assert np.allclose(np.abs(vecs[:, 0]), [0, 1, 0])


def test_sparse_path_harness_1d():
    res = solve_qsd(DirichletHarness(1), Grid.box(1, 0.0, math.pi, 1000), k=2)
    assert res.eigenvalues == pytest.approx([0.5, 2.0], rel=1e-3)
    assert np.all(res.psi1 > 0)


def test_second_order_convergence():
    errs = []
    for n in (49, 99, 199):
        lam = solve_qsd(DirichletHarness(1), Grid.box(1, 0.0, math.pi, n), k=1).lambda1
        errs.append(abs(lam - 0.5))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.6 < r < 4.4 for r in ratios)


def test_residual_bound():
    A = build_operator(km(COMPETITION_SETS["ones"]), Grid.box(2, 0.01, 5.0, 30))
    vals, vecs = smallest_eigenpairs(A, k=2, tol_eig=1e-10)
    for j in range(2):
        v = vecs[:, j]
        assert np.linalg.norm(A @ v - vals[j] * v) <= 1e-10 * np.linalg.norm(v)


# -- one-dimensional QSD ----------------------------------------------------------

def test_axis_eigenvalues_match_shooting(axis_result):
    assert axis_result.lambda1 == pytest.approx(AXIS_LAMBDA1, rel=1e-4)
    assert axis_result.lambda2 == pytest.approx(AXIS_LAMBDA2, rel=1e-4)


def test_symmetric_axes_agree():
    p = validate_params(COMPETITION_SETS["ones"])
    a = solve_qsd_1d(p, 1, k=1).lambda1
    b = solve_qsd_1d(p, 2, k=1).lambda1
    assert abs(a - b) <= 1e-10


def test_ground_state_objects(axis_result):
    r = axis_result
    assert r.lambda1 > 0 and np.all(r.psi1 > 0)
    assert np.sum(r.psi1**2) * r.grid.cell_volume == pytest.approx(1.0, rel=1e-12)
    assert np.sum(r.nu1) * r.grid.cell_volume == pytest.approx(1.0, abs=1e-10)
    w = r.psi1 * np.exp(-r.V_nodes)
    assert np.allclose(r.nu1, w / (w.sum() * r.grid.cell_volume), rtol=1e-13)
    assert np.allclose(r.eta1, np.exp(r.V_nodes) * r.psi1)


def test_mass_stable_under_refinement():
    p = validate_params(coeffs())
    g = auto_grid(AxisModel(p, 1), n=1000)
    m1 = solve_qsd_1d(p, 1, grid=g, k=1).mass_eta1_mu
    m2 = solve_qsd_1d(p, 1, grid=g.refined(), k=1).mass_eta1_mu
    assert abs(m1 - m2) / m2 < 0.01


def test_detailed_balance_of_diffusion_generator():
    m = km(COOPERATIVE_SETS["gamma2"])
    g = Grid.box(2, 0.05, 5.0, 15)
    A = build_operator(m, g)
    V = m.V(g.flat_nodes())
    Q = diffusion_generator(A, V).toarray()
    mu = np.exp(-2 * V)
    B = mu[:, None] * Q
    off = ~np.eye(g.size, dtype=bool)
    assert np.allclose(B[off], B.T[off], rtol=1e-12, atol=0)
    assert np.all(Q[off] >= 0)
    # interior rows conserve mass; killing only through boundary links
    assert np.all(Q.sum(axis=1) <= 1e-9 * np.abs(np.diag(Q)))


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_lambda_positive_property(r, g):
    p = validate_params(coeffs(r1=r, gamma1=g))
    am = AxisModel(p, 1)
    res = solve_qsd(am, auto_grid(am, n=300), k=1)
    assert res.lambda1 > 0 and np.all(res.psi1 > 0)


# -- two-dimensional QSD ------------------------------------------------------------

@pytest.fixture(scope="module")
def independent_2d():
    m = km(coeffs())
    return m, solve_qsd_2d(m, auto_grid(m, n=160), k=2)


def test_independent_additivity(independent_2d, axis_result):
    _, res = independent_2d
    s = 2 * axis_result.lambda1
    assert abs(res.lambda1 - s) / res.lambda1 <= 0.01
    assert res.lambda1 > 0 and np.all(res.psi1 > 0)


def test_independent_outer_product(independent_2d):
    m, res = independent_2d
    g1 = res.grid.axis_grid(0)
    one = solve_qsd_1d(m, 1, grid=g1, k=1).psi1
    outer = np.outer(one, one).ravel()
    cos = outer @ res.psi1 / (np.linalg.norm(outer) * np.linalg.norm(res.psi1))
    assert cos >= 0.999


@pytest.mark.parametrize("name", sorted(COMPETITION_SETS))
def test_competition_inequality(name):
    m = km(COMPETITION_SETS[name])
    lam = solve_qsd_2d(m, auto_grid(m, n=120), k=1).lambda1
    s = sum(solve_qsd_1d(m, a, k=1).lambda1 for a in (1, 2))
    assert lam >= s * 0.99


@pytest.mark.parametrize("name", sorted(COOPERATIVE_SETS))
def test_cooperation_inequality(name):
    m = km(COOPERATIVE_SETS[name])
    lam = solve_qsd_2d(m, auto_grid(m, n=120), k=1).lambda1
    s = sum(solve_qsd_1d(m, a, k=1).lambda1 for a in (1, 2))
    assert 0 < lam <= s * 1.01


def test_truncation_report():
    m = km(coeffs())
    res = solve_qsd_2d(m, auto_grid(m, n=60), k=1, check_truncation=True)
    assert set(res.truncation) >= {"relative_shift", "unstable"}
    assert res.truncation["relative_shift"] < 5e-3 and not res.truncation_unstable


def test_summary_and_columns(independent_2d):
    _, res = independent_2d
    s = res.summary()
    assert len(s["lambda"]) == 2 and s["discretization"] == "ground_state"
    cols = res.node_columns()
    assert list(cols) == ["x1", "x2", "psi1", "eta1", "nu1"]
    assert res.nu1_array().shape == res.grid.shape


# -- conditioned law ----------------------------------------------------------------

def test_tv_distance_basic():
    assert tv_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0
    assert tv_distance(np.ones(4), np.ones(4), 0.25) == 0.0


def test_stationary_from_qsd(axis_result):
    r = axis_result
    am = AxisModel(validate_params(coeffs()), 1)
    traj = evolve_conditioned_law(am, r.grid, r.nu1, t_end=4.0, dt_pde=0.01, record_every=50)
    drift = traj.tv_to(r.nu1)
    assert np.all(drift <= 1e-6 * np.maximum(traj.times, 1e-12) + 1e-12)
    assert np.all(np.diff(traj.survival) <= 0)
    rate = fit_exponential_rate(traj.times, traj.survival)
    assert rate == pytest.approx(r.lambda1, rel=0.01)


def test_point_start_decay_rate(axis_result):
    r = axis_result
    am = AxisModel(validate_params(coeffs()), 1)
    start = mollified_point_mass(r.grid, [1.0])
    traj = evolve_conditioned_law(am, r.grid, start, t_end=10.0, dt_pde=0.005, record_every=20)
    assert np.allclose(traj.densities.sum(axis=1) * r.grid.cell_volume, 1.0)
    assert np.all(traj.densities >= 0)
    rate = fit_tv_decay(traj.times, traj.tv_to(r.nu1), window=(1e-8, 1e-3))
    assert rate == pytest.approx(r.lambda2 - r.lambda1, rel=0.10)


def test_initial_density_checks(axis_result):
    am = AxisModel(validate_params(coeffs()), 1)
    with pytest.raises(ValidationError):
        evolve_conditioned_law(am, axis_result.grid, 2 * axis_result.nu1, 1.0, 0.1)
    with pytest.raises(ValidationError):
        evolve_conditioned_law(am, axis_result.grid, axis_result.nu1[:-1], 1.0, 0.1)


def test_rough_start_with_large_step_is_rejected():
    g = Grid.box(1, 0.0, math.pi, 400)
    p = np.zeros(g.size)
    p[:3] = 1.0 / (3 * g.cell_volume)
    with pytest.raises(StepUnstable, match="negative mass"):
        evolve_conditioned_law(DirichletHarness(1), g, p, t_end=5.0, dt_pde=0.05)
