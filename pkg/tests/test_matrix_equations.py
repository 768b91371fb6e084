import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attracting_cylinders.errors import DimensionError
from attracting_cylinders.linalg_core import Definiteness, definiteness
from attracting_cylinders.lmi import LmiProblem, SolverOptions, solve_feasibility, sym
from attracting_cylinders.matrix_equations import solve_axb, strict_lyap_solvable

from conftest import random_low_rank


def _instance(rng):
    m, n = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    A = random_low_rank(rng, m, p, int(rng.integers(1, min(m, p) + 1)))
    B = random_low_rank(rng, q, n, int(rng.integers(1, min(q, n) + 1)))
    return A, B


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solvable_instances_parameterize_all_solutions(seed):
    rng = np.random.default_rng(seed)
    A, B = _instance(rng)
    Xtrue = rng.standard_normal((A.shape[1], B.shape[0]))
    C = A @ Xtrue @ B
    sol = solve_axb(A, B, C)
    assert sol.solvable
    scale = 1.0 + np.linalg.norm(A, 2) * np.linalg.norm(B, 2)
    for Y in rng.standard_normal((100,) + Xtrue.shape):
        X = sol.solution(Y)
        assert np.linalg.norm(A @ X @ B - C, 2) <= 1e-8 * scale * (1.0 + np.linalg.norm(X, 2))
    # completeness: every solution is reached by choosing Y equal to it
    assert np.allclose(sol.solution(Xtrue), Xtrue, atol=1e-8 * scale * (1 + np.linalg.norm(Xtrue)))


def test_unsolvable_instances_rejected(rng):
    count = 0
    for _ in range(200):
        A, B = _instance(rng)
        C = rng.standard_normal((A.shape[0], B.shape[1]))
        sol = solve_axb(A, B, C)
        direct = np.linalg.norm(A @ np.linalg.pinv(A) @ C @ np.linalg.pinv(B) @ B - C) <= 1e-8 * (1 + np.linalg.norm(C))
        assert sol.solvable == direct
        count += not sol.solvable
    assert count > 50


def test_solve_axb_empty_and_dimensions():
    sol = solve_axb(np.zeros((0, 2)), np.eye(3), np.zeros((0, 3)))
    assert sol.solvable and sol.X0.shape == (2, 3)
    with pytest.raises(DimensionError):
        solve_axb(np.eye(2), np.eye(3), np.zeros((3, 3)))


def _direct_lmi(A, B, C):
    prob = LmiProblem()
    X = prob.rectangular("X", A.shape[1], B.shape[0])
    prob.add(sym(A @ X @ B) + C, "NEG_DEF", margin=1e-6, label="direct")
    return solve_feasibility(prob, SolverOptions(var_bound=1e6)).feasible


def _restricted_margin(A, B, C):
    """Largest eigenvalue of C restricted to ker(A^T) and to ker(B) (negative means solvable)."""
    worst = -np.inf
    for M in (A.T, B):
        _, s, Vt = np.linalg.svd(M)
        r = int(np.sum(s > 1e-10 * max(s[0], 1e-300)))
        N = Vt[r:].T
        if N.shape[1]:
            worst = max(worst, np.linalg.eigvalsh(N.T @ C @ N)[-1])
    return worst


def test_two_sided_test_agrees_with_direct_lmi(rng):
    checked = agree = feasible = 0
    while checked < 200:
        n = int(rng.integers(1, 5))
        A = random_low_rank(rng, n, int(rng.integers(1, 5)), int(rng.integers(1, n + 1)))
        B = random_low_rank(rng, int(rng.integers(1, 5)), n, int(rng.integers(1, n + 1)))
        S = rng.standard_normal((n, n))
        C = S + S.T - rng.uniform(-1.0, 4.0) * np.eye(n)
        if abs(_restricted_margin(A, B, C)) < 1e-3:
            continue  # too close to the boundary for a margin-1e-6 solve to be decisive
        checked += 1
        res = strict_lyap_solvable(A, B, C)
        agree += res.feasible == _direct_lmi(A, B, C)
        feasible += res.feasible
    assert agree == checked
    assert 30 < feasible < 170


def test_witnesses_certify_and_are_monotone(rng):
    for _ in range(200):
        n = int(rng.integers(1, 5))
        A = rng.standard_normal((n, int(rng.integers(1, 5))))
        B = rng.standard_normal((int(rng.integers(1, 5)), n))
        S = rng.standard_normal((n, n))
        C = S + S.T - rng.uniform(-1.0, 4.0) * np.eye(n)
        res = strict_lyap_solvable(A, B, C)
        if not res.feasible:
            continue
        for mu1 in (res.mu1, 2 * res.mu1 + 1, 10 * res.mu1 + 5):
            assert definiteness(C - mu1 * A @ A.T).kind is Definiteness.ND
        for mu2 in (res.mu2, 2 * res.mu2 + 1, 10 * res.mu2 + 5):
            assert definiteness(C - mu2 * B.T @ B).kind is Definiteness.ND


def test_two_sided_test_simple_cases():
    assert strict_lyap_solvable(np.eye(2), np.eye(2), np.eye(2)).feasible
    res = strict_lyap_solvable(np.zeros((2, 1)), np.eye(2), np.eye(2))
    assert not res.feasible and res.mu1 is None
    feas, mu1, mu2 = strict_lyap_solvable(np.zeros((2, 1)), np.zeros((1, 2)), -np.eye(2))
    assert feas and mu1 == 0.0 and mu2 == 0.0
