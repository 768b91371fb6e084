import dataclasses

import numpy as np
import pytest

from attracting_cylinders.analysis import DisturbedSystem, certificate_block
from attracting_cylinders.errors import (
    DimensionError,
    InfeasibleError,
    InvalidInputError,
    NotRealizableError,
    RankError,
    StructuralError,
)
from attracting_cylinders.synthesis import (
    CclOptions,
    ControllerParams,
    PlantModel,
    ReferenceModel,
    SynthesisProblem,
    _ccl_problem,
    assemble,
    build_H,
    check_decoupling_condition,
    closed_loop,
    cone_complementarity,
    recover_nonzero_E1,
    recover_X,
    synthesize,
    tracking_condition,
    verify_closed_loop,
    y_lmi,
)


def random_problem(rng, target="stabilize", a3=None, with_E1=False):
    """Random plant and reference; ``target`` picks K = [I 0 0], [I 0 -I] or [I -I 0]."""
    a1 = int(rng.integers(1, 4))
    b1, b2, c1 = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 3))
    a2 = a1 if target == "track" else int(rng.integers(0, 3))
    c2 = int(rng.integers(0, 2)) if a2 else 0
    g = b2 if target == "track" else (int(rng.integers(0, 2)) if a2 else 0)
    plant = PlantModel(
        rng.standard_normal((a1, a1)), rng.standard_normal((a1, b1)), rng.standard_normal((a1, c1)),
        rng.standard_normal((b2, a1)),
        0.1 * rng.standard_normal((b2, b1)) if with_E1 else None,
        rng.standard_normal((b2, c1)),
    )
    ref = ReferenceModel(rng.standard_normal((a2, a2)), rng.standard_normal((a2, c2)), rng.standard_normal((g, a2)))
    if a3 is None:
        a3 = a1 if target == "observe" else int(rng.integers(0, 3))
    K1 = np.eye(a1)
    K2 = -np.eye(a1) if target == "track" else np.zeros((a1, a2))
    K3 = -np.eye(a1) if target == "observe" else np.zeros((a1, a3))
    return SynthesisProblem(plant, ref, a3, K1, K2, K3, np.eye(c1 + c2))


def test_stabilization_and_observation_targets_always_decouple(rng):
    for target in ("stabilize", "observe"):
        for _ in range(100):
            p = random_problem(rng, target)
            blocks = assemble(p)
            assert check_decoupling_condition(blocks.A, blocks.B, blocks.D, blocks.K)


def test_tracking_closed_form_agrees_with_general_test(rng):
    outcomes = set()
    for _ in range(200):
        p = random_problem(rng, "track")
        blocks = assemble(p)
        general = check_decoupling_condition(blocks.A, blocks.B, blocks.D, blocks.K)
        outcomes.add(bool(general))
        assert bool(general) == bool(tracking_condition(p))
    assert outcomes == {True, False}


def test_tracking_fixture_decouples(tracking):
    blocks = assemble(tracking.problem)
    assert check_decoupling_condition(blocks.A, blocks.B, blocks.D, blocks.K).residual < 1e-12
    assert tracking_condition(tracking.problem)


def test_counterexample_fails_and_synthesis_raises():
    # no actuation, mismatched dynamics and an output that cannot see the mismatch
    plant = PlantModel([[0.0, 1.0], [-1.0, 0.0]], np.zeros((2, 1)), [[1.0], [0.0]], [[1.0, 0.0]])
    ref = ReferenceModel(np.diag([-1.0, -2.0]), np.zeros((2, 0)), [[1.0, 0.0]])
    p = SynthesisProblem(plant, ref, 0, np.eye(2), -np.eye(2), np.zeros((2, 0)), np.eye(1))
    blocks = assemble(p)
    check = check_decoupling_condition(blocks.A, blocks.B, blocks.D, blocks.K)
    assert not check and check.residual > 1e-3
    with pytest.raises(StructuralError) as info:
        synthesize(p, [0.5])
    assert info.value.residual == pytest.approx(check.residual)


def test_closed_loop_is_the_stacked_affine_map(rng):
    for _ in range(50):
        p = random_problem(rng, rng.choice(["stabilize", "observe"]))
        blocks = assemble(p)
        X = rng.standard_normal((p.a3 + p.plant.dims[1], p.a3 + p.plant.dims[2] + p.reference.dims[2]))
        ctrl = ControllerParams.from_X(X, p.a3, p.plant.dims[2])
        assert np.allclose(ctrl.as_X(), X)
        loop = closed_loop(p, ctrl)
        assert np.allclose(loop.M, blocks.A + blocks.B @ X @ blocks.D, atol=1e-12)
        assert np.allclose(loop.N, blocks.C + blocks.B @ X @ blocks.F, atol=1e-12)


def test_recovered_X_solves_the_decoupling_equation_and_gain_identity(rng):
    for _ in range(100):
        p = random_problem(rng, rng.choice(["stabilize", "observe"]))
        A, B, C, D, F, K = assemble(p)
        H = build_H(A, B, C, D, F, K)
        Y = rng.standard_normal((B.shape[1], D.shape[0]))
        ctrl = recover_X(Y, A, B, D, K, p.a3, p.plant.dims[2])
        X = ctrl.as_X()
        Pi = np.eye(p.n) - np.linalg.pinv(K) @ K
        lhs, rhs = K @ B @ X @ D @ Pi, -K @ A @ Pi
        assert np.linalg.norm(lhs - rhs, 2) <= 1e-7 * (1.0 + np.linalg.norm(rhs, 2) + np.linalg.norm(lhs, 2))
        loop = closed_loop(p, ctrl)
        assert loop.regularity_residual() <= 1e-7
        # the gain LMI and the certificate block of the closed loop coincide
        S = rng.standard_normal((p.k, p.k))
        P = S @ S.T + np.eye(p.k)
        alpha = float(rng.uniform(0.1, 2.0))
        direct = certificate_block(DisturbedSystem(loop.M, loop.N, p.G), K, P, alpha)
        reduced = y_lmi(P, Y, H, p.G, alpha)
        assert np.linalg.norm(direct - reduced, 2) <= 1e-12 * max(1.0, np.linalg.norm(direct, 2))


def test_feedthrough_recovery_reproduces_the_design_loop(rng):
    for _ in range(50):
        p = random_problem(rng, "stabilize", with_E1=True)
        a3, b1, b2, g = p.a3, *p.plant.dims[1:3], p.reference.dims[2]
        ctrl0 = ControllerParams.from_X(0.3 * rng.standard_normal((a3 + b1, a3 + b2 + g)), a3, b2)
        # the design assumes the measurement y - E1 u, i.e. a plant without feedthrough
        bare = dataclasses.replace(p, plant=dataclasses.replace(p.plant, E1=None))
        want = closed_loop(bare, ctrl0)
        got = closed_loop(p, recover_nonzero_E1(ctrl0, p.plant.E1))
        assert np.allclose(got.M, want.M, atol=1e-9) and np.allclose(got.N, want.N, atol=1e-9)


def test_singular_feedthrough_loop_is_rejected():
    ctrl = ControllerParams(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((0, 0)),
                            np.zeros((1, 0)), -np.ones((1, 1)), np.zeros((1, 0)))
    with pytest.raises(NotRealizableError):
        recover_nonzero_E1(ctrl, np.ones((1, 1)))
    plant = PlantModel([[-1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
    p = SynthesisProblem(plant, ReferenceModel.empty(), 0, [[1.0]], np.zeros((1, 0)), np.zeros((1, 0)), [[1.0]])
    with pytest.raises(NotRealizableError):
        closed_loop(p, dataclasses.replace(ctrl, E3=np.ones((1, 1))))


def test_ccl_inequalities_hold_at_the_returned_point(tracking):
    p = tracking.problem
    H = build_H(*assemble(p))
    for early in (True, False):
        res = cone_complementarity(H, p.G, 0.5, CclOptions(early_exit=early))
        prob, _, _ = _ccl_problem(H, p.G, 0.5, CclOptions().margin)
        ok, worst, bad = prob.check({"P": res.P, "Q": res.Q, "mu1": res.mu1, "mu2": res.mu2})
        assert ok and worst < 0, bad


def test_ccl_history_is_nonincreasing_and_converges(tracking, observer):
    for spec, alpha in ((tracking, 0.5), (observer, 0.3)):
        p = spec.problem
        res = cone_complementarity(build_H(*assemble(p)), p.G, alpha, CclOptions(early_exit=False))
        h = res.history
        assert h and all(b <= a * (1 + 1e-6) + 1e-9 for a, b in zip(h, h[1:]))
        assert res.converged and h[-1] <= 2 * p.k * 1.05
        assert res.Y is not None


def test_tracking_synthesis_end_to_end(tracking):
    res = synthesize(tracking.problem, [0.5])
    loop = res.closed_loop
    assert loop.margin < 0 and res.diagnostics.alpha == 0.5
    assert verify_closed_loop(tracking.problem, loop, loop.P, 0.5) == pytest.approx(loop.margin)
    assert loop.regularity_residual() <= 1e-7
    c = res.controller
    assert max(np.linalg.norm(m) for m in (c.A3, c.B3, c.C3, c.D3)) < 1e-6


def test_static_controller_path(tracking):
    p = dataclasses.replace(tracking.problem, a3=0, K3=np.zeros((2, 0)))
    res = synthesize(p, [0.5])
    c = res.controller
    assert c.A3.shape == (0, 0) and c.B3.shape == (0, 1) and c.D3.shape == (1, 0)
    assert c.E3.shape == (1, 1) and c.F3.shape == (1, 1)
    assert res.closed_loop.margin < 0


def test_observer_synthesis_end_to_end(observer):
    res = synthesize(observer.problem, [0.3])
    assert res.closed_loop.margin < 0
    assert res.closed_loop.M.shape == (6, 6)


def test_infeasible_grid_reports_per_alpha(tracking):
    with pytest.raises(InfeasibleError) as info:
        synthesize(tracking.problem, [1e4])
    (rep,) = info.value.details
    assert rep.alpha == 1e4 and rep.status != "verified"


def test_problem_validation(tracking):
    p = tracking.problem
    with pytest.raises(RankError):
        dataclasses.replace(p, K1=np.ones((2, 2)), K2=np.ones((2, 2)))
    with pytest.raises(DimensionError):
        dataclasses.replace(p, G=np.eye(2))
    with pytest.raises(InvalidInputError):
        dataclasses.replace(p, G=-np.eye(1))
    with pytest.raises(InvalidInputError):
        synthesize(p, [-1.0])
    with pytest.raises(DimensionError):
        closed_loop(p, ControllerParams.from_X(np.zeros((1, 2)), 0, 1))
    with pytest.raises(InvalidInputError):
        cone_complementarity(build_H(*assemble(p)), p.G, 0.0)
