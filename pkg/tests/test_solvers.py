import numpy as np
import pytest

from src.core.arrangements import ActivationPattern, ArrangementSet, enumerate_exact
from src.core.errors import ConfigError, ShapeError
from src.core.program import (ConvexTrainingProblem, GroupSolution, LossKind, cone_violation, dual_certificate,
                              objective, solve_region_dual)
from src.core.solvers import (SolverConfig, SolverDiagnostics, _project_groups, complex_soft_threshold,
                              cone_project, fista_complex_lasso, group_soft_threshold, nuclear_objective,
                              polish_group_cone, solve_group_cone, solve_nuclear, svt)
from tests.oracles import cd_lasso, cone_projection_bruteforce, group_lasso_single


def test_solver_config_validation():
    assert SolverConfig.from_mapping(None).max_iter == 20000
    with pytest.raises(ConfigError):
        SolverConfig.from_mapping({"rho": -1.0})
    with pytest.raises(ConfigError):
        SolverConfig.from_mapping({"balance_factor": 1.0})


def test_cone_project_orthant():
    assert np.allclose(cone_project(np.array([1.0, -2.0]), np.eye(2)), [1.0, 0.0])


def test_cone_project_feasible_is_identity(rng):
    A = rng.standard_normal((4, 3))
    x = cone_project(rng.standard_normal(3), A)
    assert np.allclose(cone_project(x, A), x, atol=1e-12)


def test_cone_project_matches_bruteforce(rng):
    for _ in range(10):
        A = rng.standard_normal((4, 3))
        x = rng.standard_normal(3)
        assert np.allclose(cone_project(x, A), cone_projection_bruteforce(x, A), atol=1e-9)


def test_cone_project_properties(rng):
    A = rng.standard_normal((6, 4))
    for _ in range(20):
        x, z = rng.standard_normal(4), rng.standard_normal(4)
        p, q = cone_project(x, A), cone_project(z, A)
        assert np.all(A @ p >= -1e-9)
        assert abs((x - p) @ p) <= 1e-9 * max(1.0, np.linalg.norm(x) ** 2)
        assert np.linalg.norm(p - q) <= np.linalg.norm(x - z) + 1e-10
        assert np.allclose(cone_project(p, A), p, atol=1e-9)


def test_group_soft_threshold():
    assert np.allclose(group_soft_threshold(np.array([3.0, 4.0]), 1.0), [2.4, 3.2])
    assert np.allclose(group_soft_threshold(np.array([3.0, 4.0]), 5.0), [0.0, 0.0])
    with pytest.raises(ShapeError):
        group_soft_threshold(np.ones(2), -1.0)


def test_complex_soft_threshold():
    z = np.array([3 + 4j, 0.5j, 0.0])
    assert np.allclose(complex_soft_threshold(z, 1.0), [2.4 + 3.2j, 0.0, 0.0])


def test_group_cone_large_beta_gives_zero(toy_data):
    X, y = toy_data
    patterns = enumerate_exact(X)
    threshold = max(max(solve_region_dual(X, p, y), solve_region_dual(X, p, -y)) for p in patterns.patterns)
    problem = ConvexTrainingProblem(X, y, 1.5 * threshold, patterns)
    sol, diagnostics = solve_group_cone(problem, SolverConfig())
    assert diagnostics.converged
    assert np.max(sol.group_norms()) <= 1e-6
    assert objective(problem, sol) == pytest.approx(0.5 * y @ y, abs=1e-5)


def test_group_cone_single_pattern_matches_group_lasso(precise_solver):
    # positive data with an all-active pattern whose cone constraint is inactive at the optimum
    X = np.array([[1.0, 0.2], [0.4, 1.0], [0.8, 0.9], [0.3, 0.5]])
    y = X @ np.array([1.0, 2.0])
    patterns = ArrangementSet(n=4)
    patterns.add(ActivationPattern((True,) * 4), np.array([1.0, 1.0]) / np.sqrt(2))
    problem = ConvexTrainingProblem(X, y, 0.3, patterns)

    sol, diagnostics = solve_group_cone(problem, precise_solver)
    reference = group_lasso_single(X, y, 0.3)
    assert diagnostics.converged
    assert np.all(X @ reference > 0)
    assert np.allclose(sol.v[0], reference, atol=1e-5)
    assert np.allclose(sol.w[0], 0.0, atol=1e-5)
    ref_value = 0.5 * np.sum((X @ reference - y) ** 2) + 0.3 * np.linalg.norm(reference)
    assert objective(problem, sol) == pytest.approx(ref_value, rel=1e-6)


def test_group_cone_solution_is_feasible_and_deterministic(toy_data):
    X, y = toy_data
    problem = ConvexTrainingProblem(X, y, 0.05, enumerate_exact(X))
    first, diag_first = solve_group_cone(problem, SolverConfig())
    second, diag_second = solve_group_cone(problem, SolverConfig())
    assert cone_violation(problem, first) <= 1e-9
    assert np.array_equal(first.v, second.v) and np.array_equal(first.w, second.w)
    assert diag_first.iterations == diag_second.iterations
    assert len(diag_first.objective_trace) == diag_first.iterations


def test_group_cone_iteration_cap_does_not_raise(toy_data):
    X, y = toy_data
    problem = ConvexTrainingProblem(X, y, 0.01, enumerate_exact(X))
    sol, diagnostics = solve_group_cone(problem, SolverConfig(max_iter=1))
    assert not diagnostics.converged
    assert diagnostics.iterations == 1
    assert cone_violation(problem, sol) <= 1e-9


def test_group_cone_hinge_is_certified(toy_data):
    X, y = toy_data
    problem = ConvexTrainingProblem(X, y, 0.1, enumerate_exact(X), LossKind.HINGE)
    sol, diagnostics = solve_group_cone(problem, SolverConfig())
    assert diagnostics.loss_dual is not None and diagnostics.loss_dual.shape == (5,)
    cert = dual_certificate(problem, sol, loss_dual=diagnostics.loss_dual)
    assert diagnostics.converged
    assert cert.valid
    assert cert.certified_gap <= 1e-6 * (1 + abs(cert.primal_value))
    assert np.all(np.abs(diagnostics.loss_dual) <= 1 + 1e-9)
    zero = GroupSolution.zeros(problem.P, problem.d)
    assert objective(problem, sol) <= objective(problem, zero) + 1e-8


@pytest.mark.parametrize("loss", [LossKind.SQUARED, LossKind.HINGE])
@pytest.mark.parametrize("seed", range(4))
def test_group_cone_converged_implies_valid_certificate(loss, seed):
    rng = np.random.default_rng(seed + 50)
    X = rng.standard_normal((5, 2))
    y = np.sign(rng.standard_normal(5)) if loss is LossKind.HINGE else rng.standard_normal(5)
    problem = ConvexTrainingProblem(X, y, 0.1, enumerate_exact(X), loss)
    sol, diagnostics = solve_group_cone(problem, SolverConfig())
    cert = dual_certificate(problem, sol, loss_dual=diagnostics.loss_dual)
    assert diagnostics.converged
    assert cert.valid
    assert diagnostics.certified_gap == pytest.approx(cert.certified_gap, abs=1e-9)


def test_group_cone_without_polish_reports_certificate(toy_data):
    X, y = toy_data
    problem = ConvexTrainingProblem(X, y, 0.1, enumerate_exact(X), LossKind.HINGE)
    sol, diagnostics = solve_group_cone(problem, SolverConfig(polish=False, max_iter=300))
    cert = dual_certificate(problem, sol, probe_count=0, loss_dual=diagnostics.loss_dual)
    if diagnostics.converged:
        assert cert.valid


def test_polish_recovers_support_from_zero(toy_data):
    X, y = toy_data
    problem = ConvexTrainingProblem(X, y, 0.05, enumerate_exact(X))
    sol, _, cert = polish_group_cone(problem, GroupSolution.zeros(problem.P, problem.d), SolverConfig())
    assert cert.valid
    assert cert.certified_gap <= 1e-6 * (1 + abs(cert.primal_value))
    assert cone_violation(problem, sol) <= 1e-9


def test_project_groups_matches_single_projection(toy_data):
    X, _ = toy_data
    patterns = enumerate_exact(X).patterns
    signs = np.vstack([p.signs for p in patterns])
    rng = np.random.default_rng(3)
    G = rng.standard_normal((len(patterns), X.shape[1]))
    G[0] = cone_project(G[0], signs[0][:, None] * X)
    projected = _project_groups(G, X, signs)
    for g, row in enumerate(G):
        assert np.allclose(projected[g], cone_project(row, signs[g][:, None] * X), atol=1e-12)
    # a row already inside its cone is passed through untouched
    assert np.array_equal(projected[0], G[0])


def test_diagnostics_dict_roundtrip():
    diagnostics = SolverDiagnostics(iterations=3, primal_residual=1e-9, dual_residual=2e-9,
                                    objective_trace=[3.0, 2.0, 1.5], converged=True, rho=2.0,
                                    loss_dual=np.array([0.1, -0.2]))
    restored = SolverDiagnostics.from_dict(diagnostics.to_dict())
    assert restored.to_dict() == diagnostics.to_dict()


def test_fista_without_penalty_solves_least_squares(rng):
    A = np.eye(4) + 0.1 * rng.standard_normal((4, 4))
    y = rng.standard_normal(4)
    z, diagnostics = fista_complex_lasso(A, y, 0.0, SolverConfig(tol_abs=1e-12, tol_rel=1e-12, max_iter=20000))
    assert diagnostics.converged
    assert np.allclose(z, np.linalg.solve(A, y), atol=1e-6)


def test_fista_large_penalty_gives_zero(rng):
    A = rng.standard_normal((6, 4))
    y = rng.standard_normal(6)
    lam = 1.01 * np.max(np.abs(A.T @ y))
    z, diagnostics = fista_complex_lasso(A, y, lam, SolverConfig())
    assert diagnostics.converged
    assert not np.any(z)


def test_fista_matches_coordinate_descent(rng):
    A = rng.standard_normal((6, 4))
    y = rng.standard_normal(6)
    lam = 0.3 * np.max(np.abs(A.T @ y))
    z, _ = fista_complex_lasso(A, y, lam, SolverConfig(tol_abs=1e-12, tol_rel=1e-12, max_iter=50000))
    assert np.max(np.abs(z.imag)) < 1e-12
    assert np.allclose(z.real, cd_lasso(A, y, lam), atol=1e-7)


def test_fista_objective_is_monotone(rng):
    A = rng.standard_normal((10, 8)) + 1j * rng.standard_normal((10, 8))
    y = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    _, diagnostics = fista_complex_lasso(A, y, 0.5, SolverConfig(max_iter=500))
    assert np.all(np.diff(diagnostics.objective_trace) <= 1e-12)


def test_svt_examples():
    assert np.allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]))
    Z = np.arange(6.0).reshape(2, 3)
    assert np.allclose(svt(Z, 0.0), Z)

    a, b = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    assert np.allclose(svt(np.outer(a, b), 5.0), (10.0 / 15.0) * np.outer(a, b))


def test_svt_subgradient_condition(rng):
    Z = rng.standard_normal((5, 3))
    tau = 0.8 * np.linalg.svd(Z, compute_uv=False)[1]
    W = svt(Z, tau)
    assert np.linalg.norm(Z - W, 2) <= tau * (1 + 1e-10)
    nuclear = np.sum(np.linalg.svd(W, compute_uv=False))
    assert np.sum((Z - W) * W) == pytest.approx(tau * nuclear, rel=1e-9)


def test_nuclear_large_beta_gives_zero(rng):
    patches = [rng.standard_normal((8, 3)) for _ in range(2)]
    y = rng.standard_normal(8)
    beta = 1.1 * np.linalg.norm(np.column_stack([Xk.T @ y for Xk in patches]), 2)
    Z, diagnostics = solve_nuclear(patches, y, beta, SolverConfig())
    assert diagnostics.converged
    assert not np.any(Z)
    assert nuclear_objective(patches, y, beta, Z) == pytest.approx(0.5 * y @ y)


def test_nuclear_single_patch_is_group_lasso(rng):
    X = rng.standard_normal((10, 3))
    y = rng.standard_normal(10)
    beta = 0.5
    Z, diagnostics = solve_nuclear([X], y, beta, SolverConfig(tol_abs=1e-12, tol_rel=1e-12, max_iter=50000))
    assert diagnostics.converged
    assert np.allclose(Z[:, 0], group_lasso_single(X, y, beta), atol=1e-7)


def test_nuclear_rejects_mismatched_patches(rng):
    with pytest.raises(ShapeError):
        solve_nuclear([rng.standard_normal((4, 2)), rng.standard_normal((4, 3))], np.ones(4), 0.1, SolverConfig())
