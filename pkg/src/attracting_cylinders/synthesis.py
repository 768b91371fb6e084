"""Dynamic output-feedback synthesis for the general linear tracking problem.

Plant, reference model and controller::

    x'  = A1 x + B1 u + C1 w          y = D1 x + E1 u + F1 w
    xr' = A2 xr + C2 h                g = D2 xr
    xc' = A3 xc + B3 y + C3 g         u = D3 xc + E3 y + F3 g

The stacked state ``s = (x, xr, xc)`` with disturbance ``f = (w, h)``,
``f^T G f <= 1``, obeys ``s' = M s + N f``.  The design target is an
attracting cylinder ``{s : (K s)^T P (K s) <= 1}`` for the tracking error
``z = K s``.

The pipeline: a structural solvability test on the pseudoinverse data, a
cone-complementarity loop producing a Lyapunov matrix ``P`` (stopped as soon
as a gain-free LMI in ``Y`` becomes feasible), recovery of the controller
matrix ``X = [[A3, B3, C3], [D3, E3, F3]]`` from ``Y``, and an a-posteriori
eigenvalue check of the closed loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .analysis import DisturbedSystem, check_output_regularity, default_alpha_grid, verify_cylinder
from .cylinder import Cylinder
from .errors import (
    DimensionError,
    InfeasibleError,
    InvalidInputError,
    NotRealizableError,
    RankError,
    StructuralError,
    UnboundedError,
)
from .linalg_core import REL_TOL, Definiteness, as_matrix, as_symmetric, blkdiag, definiteness, matrix_rank, pinv, rel_residual
from .lmi import LmiProblem, SolverOptions, Status, bmat, minimize, solve_feasibility

#: Relative tolerance of the closed-loop output-regularity check.
CLOSED_LOOP_TOL = 1e-7


def _mat(M, rows: int | None, cols: int | None, name: str) -> np.ndarray:
    """Matrix with optional expected shape; empty matrices keep their shape."""
    A = np.asarray(M, dtype=float)
    if A.size == 0:
        if A.ndim == 2:
            r, c = A.shape
        else:
            r, c = (rows or 0), (cols or 0)
        A = np.zeros((r, c))
    else:
        A = as_matrix(A, name)
    if rows is not None and A.shape[0] != rows:
        raise DimensionError(f"{name} has {A.shape[0]} rows, expected {rows}")
    if cols is not None and A.shape[1] != cols:
        raise DimensionError(f"{name} has {A.shape[1]} columns, expected {cols}")
    return A


# -- problem data --------------------------------------------------------------


@dataclass(frozen=True)
class PlantModel:
    """Plant ``x' = A1 x + B1 u + C1 w``, measured output ``y = D1 x + E1 u + F1 w``."""

    A1: np.ndarray
    B1: np.ndarray
    C1: np.ndarray
    D1: np.ndarray
    E1: np.ndarray | None = None
    F1: np.ndarray | None = None

    def __post_init__(self):
        A1 = _mat(self.A1, None, None, "A1")
        a1 = A1.shape[0]
        if A1.shape != (a1, a1):
            raise DimensionError("A1 must be square")
        B1 = _mat(self.B1, a1, None, "B1")
        C1 = _mat(self.C1, a1, None, "C1")
        D1 = _mat(self.D1, None, a1, "D1")
        b1, c1, b2 = B1.shape[1], C1.shape[1], D1.shape[0]
        E1 = np.zeros((b2, b1)) if self.E1 is None else _mat(self.E1, b2, b1, "E1")
        F1 = np.zeros((b2, c1)) if self.F1 is None else _mat(self.F1, b2, c1, "F1")
        for name, val in (("A1", A1), ("B1", B1), ("C1", C1), ("D1", D1), ("E1", E1), ("F1", F1)):
            object.__setattr__(self, name, val)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """``(a1, b1, b2, c1)``: states, inputs, outputs, disturbances."""
        return self.A1.shape[0], self.B1.shape[1], self.D1.shape[0], self.C1.shape[1]


@dataclass(frozen=True)
class ReferenceModel:
    """Reference ``xr' = A2 xr + C2 h`` with output ``g = D2 xr``; may be empty."""

    A2: np.ndarray
    C2: np.ndarray
    D2: np.ndarray

    def __post_init__(self):
        A2 = _mat(self.A2, None, None, "A2")
        a2 = A2.shape[0]
        if A2.shape != (a2, a2):
            raise DimensionError("A2 must be square")
        C2 = _mat(self.C2, a2, None, "C2")
        D2 = _mat(self.D2, None, a2, "D2")
        for name, val in (("A2", A2), ("C2", C2), ("D2", D2)):
            object.__setattr__(self, name, val)

    @classmethod
    def empty(cls) -> "ReferenceModel":
        return cls(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)))

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(a2, c2, g)``: states, disturbances, outputs."""
        return self.A2.shape[0], self.C2.shape[1], self.D2.shape[0]


@dataclass(frozen=True)
class SynthesisProblem:
    """Plant, reference model, controller order, target map ``K`` and bound ``G``."""

    plant: PlantModel
    reference: ReferenceModel
    a3: int
    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        a1, _, _, c1 = self.plant.dims
        a2, c2, _ = self.reference.dims
        a3 = int(self.a3)
        if a3 < 0:
            raise InvalidInputError("controller order must be >= 0")
        K1 = _mat(self.K1, None, a1, "K1")
        k = K1.shape[0]
        K2 = _mat(self.K2, k, a2, "K2")
        K3 = _mat(self.K3, k, a3, "K3")
        K = np.hstack([K1, K2, K3])
        if k == 0 or matrix_rank(K) != k:
            raise RankError(f"target map K must have full row rank (rank {matrix_rank(K)} < {k} rows); "
                            "drop linearly dependent rows")
        m = c1 + c2
        G = np.asarray(self.G, dtype=float)
        G = np.zeros((0, 0)) if m == 0 and G.size == 0 else as_symmetric(G, "G")
        if G.shape != (m, m):
            raise DimensionError(f"G must be {m}x{m} (plant plus reference disturbances)")
        if m and definiteness(G).kind is not Definiteness.PD:
            raise InvalidInputError("disturbance bound G must be positive definite")
        object.__setattr__(self, "a3", a3)
        for name, val in (("K1", K1), ("K2", K2), ("K3", K3), ("G", G)):
            object.__setattr__(self, name, val)

    @property
    def K(self) -> np.ndarray:
        return np.hstack([self.K1, self.K2, self.K3])

    @property
    def n(self) -> int:
        return self.plant.dims[0] + self.reference.dims[0] + self.a3

    @property
    def k(self) -> int:
        return self.K1.shape[0]

    @property
    def x_shape(self) -> tuple[int, int]:
        """Shape of the controller matrix ``X``."""
        _, b1, b2, _ = self.plant.dims
        return self.a3 + b1, self.a3 + b2 + self.reference.dims[2]


@dataclass(frozen=True)
class ControllerParams:
    """Controller ``xc' = A3 xc + B3 y + C3 g``, ``u = D3 xc + E3 y + F3 g``."""

    A3: np.ndarray
    B3: np.ndarray
    C3: np.ndarray
    D3: np.ndarray
    E3: np.ndarray
    F3: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """``(a3, b1, b2, g)``."""
        return self.A3.shape[0], self.D3.shape[0], self.B3.shape[1], self.C3.shape[1]

    def as_X(self) -> np.ndarray:
        top = np.hstack([self.A3, self.B3, self.C3])
        bottom = np.hstack([self.D3, self.E3, self.F3])
        return np.vstack([top, bottom])

    @classmethod
    def from_X(cls, X, a3: int, b2: int) -> "ControllerParams":
        X = np.asarray(X, dtype=float)
        if X.shape[0] < a3 or X.shape[1] < a3 + b2:
            raise DimensionError(f"X of shape {X.shape} too small for a3={a3}, b2={b2}")
        r, c = slice(0, a3), slice(a3, None)
        c0, c1, c2 = slice(0, a3), slice(a3, a3 + b2), slice(a3 + b2, None)
        return cls(X[r, c0].copy(), X[r, c1].copy(), X[r, c2].copy(),
                   X[c, c0].copy(), X[c, c1].copy(), X[c, c2].copy())


@dataclass
class ClosedLoop:
    """``s' = M s + N f`` with target map ``K`` and certificate ``(P, alpha)``."""

    M: np.ndarray
    N: np.ndarray
    K: np.ndarray
    P: np.ndarray | None = None
    alpha: float | None = None
    margin: float | None = None

    @property
    def cylinder(self) -> Cylinder | None:
        if self.P is None:
            return None
        return Cylinder(self.K.T @ self.P @ self.K)

    def regularity_residual(self) -> float:
        K = self.K
        KM = K @ self.M
        return rel_residual(KM @ (np.eye(K.shape[1]) - pinv(K) @ K), KM)


# -- assembly ------------------------------------------------------------------


class BlockMatrices(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    F: np.ndarray
    K: np.ndarray


def assemble(problem: SynthesisProblem) -> BlockMatrices:
    """Stacked matrices with ``M = A + B X D`` and ``N = C + B X F``.

    The measured signal fed to the design is ``y - E1 u``; a nonzero ``E1``
    is handled afterwards by :func:`recover_nonzero_E1`.
    """
    p, r = problem.plant, problem.reference
    a1, b1, b2, c1 = p.dims
    a2, c2, gd = r.dims
    a3 = problem.a3
    A = blkdiag(p.A1, r.A2, np.zeros((a3, a3)))
    B = np.block([
        [np.zeros((a1, a3)), p.B1],
        [np.zeros((a2, a3)), np.zeros((a2, b1))],
        [np.eye(a3), np.zeros((a3, b1))],
    ])
    C = np.block([
        [p.C1, np.zeros((a1, c2))],
        [np.zeros((a2, c1)), r.C2],
        [np.zeros((a3, c1)), np.zeros((a3, c2))],
    ])
    D = np.block([
        [np.zeros((a3, a1)), np.zeros((a3, a2)), np.eye(a3)],
        [p.D1, np.zeros((b2, a2)), np.zeros((b2, a3))],
        [np.zeros((gd, a1)), r.D2, np.zeros((gd, a3))],
    ])
    F = np.block([
        [np.zeros((a3, c1)), np.zeros((a3, c2))],
        [p.F1, np.zeros((b2, c2))],
        [np.zeros((gd, c1)), np.zeros((gd, c2))],
    ])
    return BlockMatrices(A, B, C, D, F, problem.K)


class HMatrices(NamedTuple):
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    H4: np.ndarray
    H5: np.ndarray
    Z: np.ndarray


def build_H(A, B, C, D, F, K) -> HMatrices:
    """Reduced data of the tracking-error dynamics.

    With ``Z = (D (K+ K - I))+`` and ``T = KB (KB)+ K A Z``::

        H1 = K A K+ + T D K+      H2 = K C + T F      H3 = K B
        H4 = D K+ + D Z D K+      H5 = F + D Z F
    """
    n = A.shape[0]
    Kp = pinv(K)
    Z = pinv(D @ (Kp @ K - np.eye(n)))
    KB = K @ B
    T = KB @ pinv(KB) @ K @ A @ Z
    H1 = K @ A @ Kp + T @ D @ Kp
    H2 = K @ C + T @ F
    H4 = D @ Kp + D @ Z @ D @ Kp
    H5 = F + D @ Z @ F
    return HMatrices(H1, H2, KB, H4, H5, Z)


@dataclass(frozen=True)
class StructuralCheck:
    ok: bool
    residual: float

    def __bool__(self):
        return self.ok


def check_decoupling_condition(A, B, D, K, tol: float = REL_TOL) -> StructuralCheck:
    """Whether some controller makes the error dynamics independent of the rest.

    Tests ``KB (KB)+ K A (D Pi)+ D Pi = K A Pi`` with ``Pi = I - K+ K``.
    """
    n = A.shape[0]
    Pi = np.eye(n) - pinv(K) @ K
    KB = K @ B
    KA = K @ A
    DPi = D @ Pi
    lhs = KB @ pinv(KB) @ KA @ pinv(DPi) @ DPi
    res = rel_residual(lhs - KA @ Pi, KA @ Pi)
    return StructuralCheck(res <= tol, res)


def tracking_condition(problem: SynthesisProblem, tol: float = REL_TOL) -> StructuralCheck:
    """Closed form of the structural test for ``K = [I, -I, 0]`` (square plant and reference).

    ``B1 B1+ (A1 - A2) S+ S = A1 - A2`` with ``S = D1^T D1 + D2^T D2``.
    """
    p, r = problem.plant, problem.reference
    if p.A1.shape != r.A2.shape or r.D2.shape[0] != p.D1.shape[0]:
        raise DimensionError("closed form needs equal plant/reference state and output dimensions")
    dA = p.A1 - r.A2
    S = p.D1.T @ p.D1 + r.D2.T @ r.D2
    res = rel_residual(p.B1 @ pinv(p.B1) @ dA @ pinv(S) @ S - dA, dA)
    return StructuralCheck(res <= tol, res)


# -- LMIs ------------------------------------------------------------------------


def _base_block(P, H: HMatrices, G, alpha):
    """``[[P H1 + H1^T P + alpha P, P H2], [H2^T P, -alpha G]]`` (numeric or affine ``P``)."""
    top = P @ H.H1 + H.H1.T @ P + P * alpha
    blocks = [[top, P @ H.H2], [H.H2.T @ P, -alpha * G]]
    if isinstance(P, np.ndarray):
        blk = np.block(blocks)
        return 0.5 * (blk + blk.T)
    return bmat(blocks)


def y_lmi(P, Y, H: HMatrices, G, alpha):
    """Left-hand side of the gain LMI (numeric ``P``; ``Y`` numeric or affine)."""
    m = H.H2.shape[1]
    E = np.vstack([P @ H.H3, np.zeros((m, H.H3.shape[1]))])
    W = np.hstack([H.H4, H.H5])
    T = E @ Y @ W
    return T + T.T + _base_block(P, H, G, alpha)


@dataclass
class CclOptions:
    """Knobs of the cone-complementarity loop and the gain LMI.

    ``margin`` is the strictness (absolute, on the maximal eigenvalue) imposed
    on the two Lyapunov inequalities; a generous value leaves room for the
    gain LMI.  ``y_margin`` is the strictness of the gain LMI (``None`` means
    the solver default relative to the constant block).
    """

    stop_tol: float = 0.05
    max_iter: int = 100
    margin: float = 1e-3
    y_margin: float | None = None
    early_exit: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class CclResult:
    P: np.ndarray
    Q: np.ndarray
    mu1: float
    mu2: float
    history: list
    iterations: int
    converged: bool
    early_exit: bool
    Y: np.ndarray | None = None
    y_margin: float | None = None


def _ccl_problem(H: HMatrices, G, alpha: float, margin: float, coupling: bool = True):
    k = H.H1.shape[0]
    prob = LmiProblem()
    P = prob.symmetric("P", k)
    Q = prob.symmetric("Q", k)
    mu1 = prob.scalar("mu1")
    mu2 = prob.scalar("mu2")
    H1, H2, H3 = H.H1, H.H2, H.H3
    W = np.hstack([H.H4, H.H5])
    first = bmat([
        [H1 @ Q + Q @ H1.T + Q * alpha - mu1 * (H3 @ H3.T), H2],
        [H2.T, -alpha * G],
    ])
    second = _base_block(P, H, G, alpha) - mu2 * (W.T @ W)
    prob.add(first, "NEG_DEF", margin=margin, label="Q-inequality")
    prob.add(second, "NEG_DEF", margin=margin, label="P-inequality")
    prob.add(P, "POS_DEF", label="P>0")
    prob.add(Q, "POS_DEF", label="Q>0")
    if coupling:
        I = np.eye(k)
        prob.add(bmat([[P, I], [I, Q]]), "POS_SEMIDEF", label="coupling")
    return prob, P, Q


def _scalar(v) -> float:
    return float(np.asarray(v, dtype=float).ravel()[0])


@dataclass(frozen=True)
class GainSolution:
    Y: np.ndarray
    margin: float


def solve_Y(P, alpha: float, H: HMatrices, G, margin: float | None = None,
            options: SolverOptions | None = None) -> GainSolution:
    """Any ``Y`` making the gain LMI strictly negative definite at fixed ``P``.

    Raises :class:`InfeasibleError` if none is found.
    """
    P = as_symmetric(P, "P")
    rows, cols = H.H3.shape[1], H.H4.shape[0]
    prob = LmiProblem()
    Y = prob.rectangular("Y", rows, cols)
    prob.add(y_lmi(P, Y, H, G, alpha), "NEG_DEF", margin=margin, label="gain")
    sol = solve_feasibility(prob, options)
    if sol.status is not Status.FEASIBLE:
        raise InfeasibleError("gain LMI has no strictly feasible solution for this P",
                              details={"worst_margin": sol.worst_margin, "status": sol.solver_status})
    Yv = sol["Y"]
    lam = float(np.linalg.eigvalsh(y_lmi(P, Yv, H, G, alpha))[-1])
    return GainSolution(Yv, lam)


def cone_complementarity(H: HMatrices, G, alpha: float, options: CclOptions | None = None) -> CclResult:
    """Cone-complementarity search for ``P`` with ``P Q`` close to ``I``.

    The first iterate is any feasible point of the two Lyapunov inequalities
    together with the coupling ``[[P, I], [I, Q]] >= 0``;
    each later iterate minimizes ``trace(P S + Q R)`` with ``(R, S)`` the
    previous ``(P, Q)`` under the same constraints.
    With ``early_exit`` the loop stops as soon as the gain LMI is feasible
    for the current ``P``.  ``history`` holds the trace objective per step.
    """
    opts = options or CclOptions()
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    G = np.asarray(G, dtype=float).reshape(H.H2.shape[1], H.H2.shape[1])
    k = H.H1.shape[0]

    # the coupling block is kept from the start: without it the first point
    # can be so badly scaled that the trace step stalls
    cprob, Pv, Qv = _ccl_problem(H, G, alpha, opts.margin, coupling=True)
    start = solve_feasibility(cprob, opts.solver)
    if start.status is not Status.FEASIBLE:
        raise InfeasibleError(f"Lyapunov inequalities infeasible at alpha={alpha:g}",
                              details={"worst_margin": start.worst_margin, "status": start.solver_status})
    P, Q = start["P"], start["Q"]
    mu1, mu2 = _scalar(start["mu1"]), _scalar(start["mu2"])
    history: list[float] = []

    def try_gain(Pc):
        try:
            return solve_Y(Pc, alpha, H, G, opts.y_margin, opts.solver)
        except InfeasibleError:
            return None

    gain = try_gain(P) if opts.early_exit else None
    if gain is not None:
        return CclResult(P, Q, mu1, mu2, history, 0, False, True, gain.Y, gain.margin)

    target = 2.0 * k * (1.0 + opts.stop_tol)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        R, S = P, Q
        try:
            sol = minimize(cprob, (Pv @ S + Qv @ R).trace(), opts.solver)
        except UnboundedError:
            break
        if sol.status is not Status.FEASIBLE:
            break
        P, Q = sol["P"], sol["Q"]
        mu1, mu2 = _scalar(sol["mu1"]), _scalar(sol["mu2"])
        history.append(float(sol.objective))
        if opts.early_exit:
            gain = try_gain(P)
            if gain is not None:
                return CclResult(P, Q, mu1, mu2, history, it, sol.objective <= target, True,
                                 gain.Y, gain.margin)
        if sol.objective <= target:
            converged = True
            break
    gain = try_gain(P)
    return CclResult(P, Q, mu1, mu2, history, it, converged, False,
                     None if gain is None else gain.Y, None if gain is None else gain.margin)


# -- recovery --------------------------------------------------------------------


def recover_X(Y, A, B, D, K, a3: int, b2: int) -> ControllerParams:
    """Controller matrix ``X = (KB)+ K A Z + Y + (KB)+ KB Y D Z`` split into blocks."""
    n = A.shape[0]
    Kp = pinv(K)
    Z = pinv(D @ (Kp @ K - np.eye(n)))
    KB = K @ B
    KBp = pinv(KB)
    Y = np.asarray(Y, dtype=float).reshape(B.shape[1], D.shape[0])
    X = KBp @ K @ A @ Z + Y + KBp @ KB @ Y @ D @ Z
    return ControllerParams.from_X(X, a3, b2)


def recover_nonzero_E1(ctrl: ControllerParams, E1) -> ControllerParams:
    """Controller acting on the true output when the plant has feedthrough ``E1``.

    ``ctrl`` was designed for the signal ``y - E1 u``.  Solving the resulting
    algebraic loop for ``u`` with ``W = (I + E3 E1)^-1`` gives::

        A3 - B3 E1 W D3    B3 - B3 E1 W E3    C3 - B3 E1 W F3
        W D3               W E3               W F3
    """
    a3, b1, b2, _ = ctrl.dims
    E1 = _mat(E1, b2, b1, "E1")
    if not np.any(E1):
        return ctrl
    Mw = np.eye(b1) + ctrl.E3 @ E1
    if matrix_rank(Mw) < b1 or np.linalg.cond(Mw) > 1e12:
        raise NotRealizableError("I + E3 E1 is singular; the controller cannot be realized")
    W = np.linalg.inv(Mw)
    BE = ctrl.B3 @ E1 @ W
    return ControllerParams(
        ctrl.A3 - BE @ ctrl.D3, ctrl.B3 - BE @ ctrl.E3, ctrl.C3 - BE @ ctrl.F3,
        W @ ctrl.D3, W @ ctrl.E3, W @ ctrl.F3,
    )


def closed_loop(problem: SynthesisProblem, ctrl: ControllerParams) -> ClosedLoop:
    """Closed-loop ``(M, N)`` of plant, reference and controller acting on the true output.

    The algebraic loop through ``E1`` is solved explicitly.
    """
    p, r = problem.plant, problem.reference
    a1, b1, b2, c1 = p.dims
    a2, c2, gd = r.dims
    a3 = problem.a3
    if ctrl.dims != (a3, b1, b2, gd):
        raise DimensionError(f"controller dims {ctrl.dims} do not match problem {(a3, b1, b2, gd)}")
    loop = np.eye(b1) - ctrl.E3 @ p.E1
    if b1 and (matrix_rank(loop) < b1 or np.linalg.cond(loop) > 1e12):
        raise NotRealizableError("I - E3 E1 is singular; the loop through E1 is ill-posed")
    V = np.linalg.inv(loop) if b1 else np.zeros((0, 0))
    Ux = V @ np.hstack([ctrl.E3 @ p.D1, ctrl.F3 @ r.D2, ctrl.D3])
    Uf = V @ np.hstack([ctrl.E3 @ p.F1, np.zeros((b1, c2))])
    Yx = np.hstack([p.D1, np.zeros((b2, a2)), np.zeros((b2, a3))]) + p.E1 @ Ux
    Yf = np.hstack([p.F1, np.zeros((b2, c2))]) + p.E1 @ Uf
    Gx = np.hstack([np.zeros((gd, a1)), r.D2, np.zeros((gd, a3))])
    M = np.vstack([
        np.hstack([p.A1, np.zeros((a1, a2 + a3))]) + p.B1 @ Ux,
        np.hstack([np.zeros((a2, a1)), r.A2, np.zeros((a2, a3))]),
        np.hstack([np.zeros((a3, a1 + a2)), ctrl.A3]) + ctrl.B3 @ Yx + ctrl.C3 @ Gx,
    ])
    N = np.vstack([
        np.hstack([p.C1, np.zeros((a1, c2))]) + p.B1 @ Uf,
        np.hstack([np.zeros((a2, c1)), r.C2]),
        ctrl.B3 @ Yf,
    ])
    return ClosedLoop(M, N, problem.K)


def verify_closed_loop(problem: SynthesisProblem, loop: ClosedLoop, P, alpha: float) -> float:
    """Certificate margin of ``(P, alpha)`` for the closed loop (negative means certified).

    Returns ``+inf`` when the error dynamics do not close in ``z = K s``.
    """
    if loop.regularity_residual() > CLOSED_LOOP_TOL:
        return math.inf
    sys = DisturbedSystem(loop.M, loop.N, problem.G)
    if not check_output_regularity(loop.K, loop.M, tol=CLOSED_LOOP_TOL):
        return math.inf
    return verify_cylinder(sys, loop.K, P, alpha)


# -- driver ----------------------------------------------------------------------


@dataclass
class AlphaReport:
    alpha: float
    status: str
    iterations: int = 0
    history: list = field(default_factory=list)
    early_exit: bool = False
    logdet: float = -math.inf
    margin: float = math.inf
    message: str = ""


@dataclass
class SynthesisDiagnostics:
    condition_residual: float
    per_alpha: list
    alpha: float | None = None
    regularity_residual: float | None = None


class SynthesisResult(NamedTuple):
    controller: ControllerParams
    closed_loop: ClosedLoop
    diagnostics: SynthesisDiagnostics


def _design_at(problem: SynthesisProblem, blocks: BlockMatrices, H: HMatrices, alpha: float,
               options: CclOptions):
    report = AlphaReport(alpha, "infeasible")
    try:
        ccl = cone_complementarity(H, problem.G, alpha, options)
    except InfeasibleError as exc:
        report.message = str(exc)
        return report, None
    report.iterations, report.history, report.early_exit = ccl.iterations, ccl.history, ccl.early_exit
    if ccl.Y is None:
        report.status = "no-gain"
        report.message = "gain LMI infeasible for the final P"
        return report, None
    _, b1, b2, _ = problem.plant.dims
    design = recover_X(ccl.Y, blocks.A, blocks.B, blocks.D, blocks.K, problem.a3, b2)
    ctrl = recover_nonzero_E1(design, problem.plant.E1)
    loop = closed_loop(problem, ctrl)
    margin = verify_closed_loop(problem, loop, ccl.P, alpha)
    report.margin = margin
    report.logdet = float(np.linalg.slogdet(ccl.P)[1])
    if not margin < 0:
        report.status = "unverified"
        report.message = f"closed-loop margin {margin:.3e} is not negative"
        return report, None
    report.status = "verified"
    loop.P, loop.alpha, loop.margin = ccl.P, alpha, margin
    return report, (ctrl, loop)


def synthesize(problem: SynthesisProblem, alpha_grid=None, options: CclOptions | None = None) -> SynthesisResult:
    """Full design pipeline over a grid of decay rates ``alpha``.

    Every grid value is tried; among verified designs the one with the
    smallest cylinder (largest ``log det P``, ties to the smaller ``alpha``)
    is returned.  The per-alpha outcomes are kept in the diagnostics.
    """
    opts = options or CclOptions()
    blocks = assemble(problem)
    cond = check_decoupling_condition(blocks.A, blocks.B, blocks.D, blocks.K)
    if not cond:
        raise StructuralError(f"tracking error cannot be decoupled (residual {cond.residual:.3e})",
                              residual=cond.residual)
    H = build_H(*blocks)
    if alpha_grid is None:
        alpha_grid = default_alpha_grid(H.H1)
    grid = sorted(float(a) for a in np.atleast_1d(alpha_grid))
    if not grid or any(a <= 0 for a in grid):
        raise InvalidInputError("alpha grid must be nonempty and positive")

    reports, designs = [], []
    for a in grid:
        rep, design = _design_at(problem, blocks, H, a, opts)
        reports.append(rep)
        if design is not None:
            designs.append((rep.logdet, -a, design))
    diag = SynthesisDiagnostics(cond.residual, reports)
    if not designs:
        raise InfeasibleError("no alpha in the grid produced a verified controller", details=reports)
    _, neg_a, (ctrl, loop) = max(designs, key=lambda d: (d[0], d[1]))
    diag.alpha = -neg_a
    diag.regularity_residual = loop.regularity_residual()
    return SynthesisResult(ctrl, loop, diag)
