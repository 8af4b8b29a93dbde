import numpy as np
import pytest

from src.core.arrangements import ActivationPattern, ArrangementSet, enumerate_exact
from src.core.errors import ShapeError
from src.core.program import (ConvexTrainingProblem, GroupSolution, LossKind, cone_violation, dual_certificate,
                              gauge_value, objective, polar_support, solve_region_dual)


def _problem(X, y, beta, loss=LossKind.SQUARED, patterns=None):
    return ConvexTrainingProblem(X, y, beta, patterns or enumerate_exact(X), loss)


def _all_active(X):
    patterns = ArrangementSet(n=X.shape[0])
    patterns.add(ActivationPattern(tuple([True] * X.shape[0])), np.ones(X.shape[1]) / np.sqrt(X.shape[1]))
    return patterns


def test_objective_at_zero(toy_data):
    X, y = toy_data
    problem = _problem(X, y, 0.1)
    assert objective(problem, GroupSolution.zeros(problem.P, problem.d)) == pytest.approx(0.5 * y @ y)

    hinge = _problem(X, y, 0.1, LossKind.HINGE)
    assert objective(hinge, GroupSolution.zeros(hinge.P, hinge.d)) == pytest.approx(5.0)


def test_objective_exact_fit_without_penalty():
    X = np.array([[1.0, 0.5], [0.5, 1.0], [1.0, 1.0]])
    v0 = np.array([0.3, 0.7])
    problem = ConvexTrainingProblem(X, X @ v0, 0.0, _all_active(X))
    assert objective(problem, GroupSolution(v0[None, :], np.zeros((1, 2)))) == pytest.approx(0.0, abs=1e-14)


def test_objective_is_convex(toy_data, rng):
    X, y = toy_data
    problem = _problem(X, y, 0.3)
    for _ in range(10):
        a = GroupSolution(rng.standard_normal((problem.P, 2)), rng.standard_normal((problem.P, 2)))
        b = GroupSolution(rng.standard_normal((problem.P, 2)), rng.standard_normal((problem.P, 2)))
        mid = GroupSolution(0.5 * (a.v + b.v), 0.5 * (a.w + b.w))
        assert objective(problem, mid) <= 0.5 * (objective(problem, a) + objective(problem, b)) + 1e-12


def test_problem_validation(toy_data):
    X, y = toy_data
    patterns = enumerate_exact(X)
    with pytest.raises(ShapeError):
        ConvexTrainingProblem(X, y[:4], 0.1, patterns)
    with pytest.raises(ShapeError):
        ConvexTrainingProblem(X, y, -1.0, patterns)
    with pytest.raises(ShapeError):
        ConvexTrainingProblem(X, 0.5 * y, 0.1, patterns, LossKind.HINGE)
    with pytest.raises(ShapeError):
        ConvexTrainingProblem(X, y, 0.1, ArrangementSet(n=5))


def test_problem_dict_roundtrip(toy_data):
    X, y = toy_data
    problem = _problem(X, y, 0.25, LossKind.HINGE)
    restored = ConvexTrainingProblem.from_dict(problem.to_dict())
    assert restored.to_dict() == problem.to_dict()


def test_design_matches_fitted(toy_data, rng):
    X, y = toy_data
    problem = _problem(X, y, 0.1)
    sol = GroupSolution(rng.standard_normal((problem.P, 2)), rng.standard_normal((problem.P, 2)))
    assert np.allclose(problem.design() @ sol.stacked(), problem.fitted(sol))
    restored = GroupSolution.from_stacked(sol.stacked(), problem.P, problem.d)
    assert np.array_equal(restored.v, sol.v) and np.array_equal(restored.w, sol.w)


def test_cone_violation(toy_data):
    X, y = toy_data
    patterns = enumerate_exact(X)
    problem = _problem(X, y, 0.1, patterns=patterns)
    zero = GroupSolution.zeros(problem.P, problem.d)
    assert cone_violation(problem, zero) == 0.0

    witnesses = np.vstack(patterns.witnesses)
    assert cone_violation(problem, GroupSolution(witnesses, witnesses)) <= 1e-9

    flipped = GroupSolution(-witnesses, np.zeros_like(witnesses))
    expected = max(float(np.max(p.signs * (X @ u))) for p, u in zip(patterns.patterns, patterns.witnesses))
    assert cone_violation(problem, flipped) == pytest.approx(expected)


def test_region_dual_zero_vector(toy_data):
    X, _ = toy_data
    pattern = enumerate_exact(X).patterns[0]
    assert solve_region_dual(X, pattern, np.zeros(5)) == 0.0


def test_region_dual_whole_ball():
    # X^T v points into the all-active region, so the maximum is ||X^T v||
    X = np.array([[1.0, 0.5], [0.5, 1.0], [1.0, 1.0]])
    v = np.array([1.0, 2.0, 0.5])
    pattern = ActivationPattern((True, True, True))
    assert solve_region_dual(X, pattern, v) == pytest.approx(np.linalg.norm(X.T @ v), rel=1e-10)


def test_region_dual_matches_angular_grid(toy_data, rng):
    X, _ = toy_data
    angles = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    U = np.vstack([np.cos(angles), np.sin(angles)])
    for pattern in enumerate_exact(X).patterns:
        v = rng.standard_normal(5)
        inside = np.all(pattern.signs[:, None] * (X @ U) >= 0, axis=0)
        grid_max = max(0.0, float(np.max((v * pattern.array) @ (X @ U[:, inside]))))
        value = solve_region_dual(X, pattern, v)
        assert grid_max <= value + 1e-9
        assert value <= grid_max + 1e-2


def test_certificate_of_zero_labels(toy_data):
    X, _ = toy_data
    problem = _problem(X, np.zeros(5), 0.1)
    cert = dual_certificate(problem, GroupSolution.zeros(problem.P, problem.d))
    assert cert.valid
    assert np.allclose(cert.v_hat, 0.0)
    assert cert.dual_value == 0.0
    assert cert.certified_gap == 0.0


def test_certificate_with_large_beta(toy_data):
    X, y = toy_data
    problem = _problem(X, y, 100.0)
    cert = dual_certificate(problem, GroupSolution.zeros(problem.P, problem.d))
    assert cert.valid
    assert np.allclose(cert.v_hat, y)
    assert cert.certified_gap == pytest.approx(0.0, abs=1e-12)
    assert cert.exact_patterns


def test_weak_duality_for_feasible_points(toy_data, rng):
    X, y = toy_data
    patterns = enumerate_exact(X)
    problem = _problem(X, y, 0.05, patterns=patterns)
    witnesses = np.vstack(patterns.witnesses)
    for _ in range(5):
        scale_v = rng.uniform(0, 1, size=(problem.P, 1))
        scale_w = rng.uniform(0, 1, size=(problem.P, 1))
        sol = GroupSolution(scale_v * witnesses, scale_w * witnesses)
        cert = dual_certificate(problem, sol, probe_count=200)
        assert cert.dual_value <= cert.primal_value + 1e-12
        assert cert.scale <= 1.0


def test_hinge_certificate_domain(toy_data):
    X, y = toy_data
    problem = _problem(X, y, 10.0, LossKind.HINGE)
    cert = dual_certificate(problem, GroupSolution.zeros(problem.P, problem.d))
    # every sample violates the margin at zero output
    assert np.allclose(cert.v_hat, y)
    assert np.all(y * cert.v_hat >= 0) and np.all(y * cert.v_hat <= 1)


def test_polar_support_zero_labels(toy_data):
    X, _ = toy_data
    assert polar_support(X, np.zeros(5), 100) == 0.0


def test_polar_support_single_row():
    X = np.array([[3.0, 4.0]])
    y = np.array([2.0])
    exact = polar_support(X, y, 10, patterns=enumerate_exact(X))
    assert exact == pytest.approx(0.4, rel=1e-9)
    sampled = polar_support(X, y, 4000, seed=1)
    assert sampled >= 0.4 - 1e-12
    assert sampled == pytest.approx(0.4, rel=1e-4)


def test_polar_support_rejects_bad_count(toy_data):
    X, y = toy_data
    with pytest.raises(ShapeError):
        polar_support(X, y, 0)


def test_gauge_of_single_neuron_output(toy_data, precise_solver):
    X, _ = toy_data
    u0 = np.array([0.6, 0.8])
    y0 = np.maximum(X @ u0, 0.0)
    single = gauge_value(X, y0, solver_cfg=precise_solver)
    double = gauge_value(X, 2 * y0, solver_cfg=precise_solver)
    assert single <= 1.0 + 1e-6
    assert double <= 2.0 + 1e-6
    assert double == pytest.approx(2 * single, rel=1e-2)
    assert gauge_value(X, np.zeros(5)) == 0.0
