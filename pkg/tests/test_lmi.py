import numpy as np
import pytest

from attracting_cylinders.errors import LmiStructureError, UnboundedError
from attracting_cylinders.lmi import (
    LmiProblem,
    Status,
    bmat,
    maximize_logdet,
    minimize,
    solve_feasibility,
    sym,
)


def lyapunov_problem(A, scale=1.0):
    n = A.shape[0]
    prob = LmiProblem()
    P = prob.symmetric("P", n)
    prob.add(scale * (P - np.eye(n)), "POS_SEMIDEF", label="P >= I")
    prob.add(scale * sym(A.T @ P), "NEG_DEF", margin=scale * 1e-6, label="decay")
    return prob, P


def test_lyapunov_feasible_and_rechecked():
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    prob, _ = lyapunov_problem(A)
    sol = solve_feasibility(prob)
    assert sol.status is Status.FEASIBLE
    P = sol["P"]
    assert np.all(np.linalg.eigvalsh(P) >= 1 - 1e-9)
    assert np.linalg.eigvalsh(A.T @ P + P @ A)[-1] <= -1e-6
    ok, worst, bad = prob.check(sol.assignment)
    assert ok and worst <= 0 and not bad


def test_lyapunov_infeasible_for_unstable_matrix():
    prob, _ = lyapunov_problem(np.array([[0.5, 0.0], [1.0, -1.0]]))
    assert solve_feasibility(prob).status is not Status.FEASIBLE


def test_minimize_trace_with_lower_bound():
    prob = LmiProblem()
    P = prob.symmetric("P", 3)
    prob.add(P - np.diag([1.0, 2.0, 3.0]), "POS_SEMIDEF")
    sol = minimize(prob, P.trace())
    assert sol.feasible
    assert sol.objective == pytest.approx(6.0, abs=1e-6)
    assert np.allclose(sol["P"], np.diag([1.0, 2.0, 3.0]), atol=1e-5)


def test_minimize_schur_complement():
    # min t subject to [[t, 1], [1, x]] >= 0 and x <= 4 gives t = 1/4
    prob = LmiProblem()
    t, x = prob.scalar("t"), prob.scalar("x")
    prob.add(bmat([[t, np.ones((1, 1))], [np.ones((1, 1)), x]]), "POS_SEMIDEF")
    prob.add(4.0 - x, "POS_SEMIDEF")
    sol = minimize(prob, t)
    assert sol.objective == pytest.approx(0.25, abs=1e-6)
    assert isinstance(sol["t"], float)


def test_unbounded_objective_raises():
    prob = LmiProblem()
    t = prob.scalar("t")
    prob.add(1.0 - t, "POS_SEMIDEF")
    with pytest.raises(UnboundedError):
        minimize(prob, t)


def test_maximize_logdet_under_upper_bound():
    prob = LmiProblem()
    P = prob.symmetric("P", 2)
    prob.add(np.diag([1.0, 2.0]) - P, "POS_SEMIDEF")
    prob.add(P, "POS_DEF", margin=1e-9)
    sol = maximize_logdet(prob, P)
    assert sol.feasible
    assert sol.objective == pytest.approx(np.log(2.0), abs=1e-6)


def test_logdet_needs_symmetric_variable():
    prob = LmiProblem()
    X = prob.rectangular("X", 2, 2)
    prob.add(sym(X), "POS_SEMIDEF")
    with pytest.raises(LmiStructureError):
        maximize_logdet(prob, X)


def test_bitwise_determinism():
    A = np.array([[-1.0, 2.0, 0.0], [0.0, -3.0, 1.0], [0.5, 0.0, -2.0]])
    first = solve_feasibility(lyapunov_problem(A)[0])["P"]
    for _ in range(3):
        assert np.array_equal(solve_feasibility(lyapunov_problem(A)[0])["P"], first)


def test_scaling_does_not_flip_status(rng):
    for _ in range(10):
        A = rng.standard_normal((3, 3)) - rng.uniform(-0.5, 3.0) * np.eye(3)
        base = solve_feasibility(lyapunov_problem(A)[0]).status
        scaled = solve_feasibility(lyapunov_problem(A, scale=1e3)[0]).status
        assert (base is Status.FEASIBLE) == (scaled is Status.FEASIBLE)


def test_masks_fix_entries_to_zero():
    prob = LmiProblem()
    X = prob.rectangular("X", 2, 2, mask=[[True, False], [False, True]])
    prob.add(sym(X) + 2 * np.eye(2), "NEG_DEF")
    sol = solve_feasibility(prob)
    assert sol.feasible
    assert sol["X"][0, 1] == 0.0 and sol["X"][1, 0] == 0.0


def test_affine_algebra_evaluates_like_numpy(rng):
    prob = LmiProblem()
    X = prob.rectangular("X", 2, 3)
    S = prob.symmetric("S", 3)
    L, R = rng.standard_normal((4, 2)), rng.standard_normal((3, 3))
    expr = L @ X @ R
    Xv, Sv = rng.standard_normal((2, 3)), rng.standard_normal((3, 3))
    Sv = Sv + Sv.T
    assert np.allclose(expr.value({"X": Xv, "S": Sv}), L @ Xv @ R)
    blk = bmat([[S, None], [None, 2.0 * np.eye(2)]])
    out = blk.value({"X": Xv, "S": Sv})
    assert out.shape == (5, 5) and np.allclose(out[:3, :3], Sv) and np.allclose(out[3:, 3:], 2 * np.eye(2))
    assert np.isclose(S.trace().value({"S": Sv})[0, 0], np.trace(Sv))


def test_structure_errors():
    prob = LmiProblem()
    X = prob.rectangular("X", 2, 2)
    with pytest.raises(LmiStructureError):
        prob.symmetric("X", 2)
    with pytest.raises(LmiStructureError):
        prob.add(X, "NEG_DEF")
    with pytest.raises(LmiStructureError):
        prob.add(np.array([[0.0, 1.0], [0.0, 0.0]]), "NEG_DEF")
    with pytest.raises(LmiStructureError):
        prob.add(np.ones((2, 3)), "NEG_DEF")
    with pytest.raises(LmiStructureError):
        X @ X
    with pytest.raises(LmiStructureError):
        prob.add(sym(X), "NEG_DEF", margin=-1.0)
    other = LmiProblem()
    Y = other.symmetric("Y", 2)
    with pytest.raises(LmiStructureError):
        prob.add(Y, "NEG_DEF")
    with pytest.raises(LmiStructureError):
        bmat([[X, np.zeros((3, 3))]])
    with pytest.raises(LmiStructureError):
        solve_feasibility(LmiProblem())
