"""Attracting cylinders of a disturbed linear system ``x' = A x + B f``.

With an output map ``C`` (full row rank, ``C A (I - C+ C) = 0``) the output
``y = C x`` obeys the closed dynamics ``y' = C A C+ y + C B f``.  Any
``P > 0`` and ``alpha > 0`` making

    [ P CAC+ + (CAC+)^T P + alpha P    P C B    ]
    [ (C B)^T P                        -alpha G ]  < 0

certify ``{x : x^T C^T P C x <= 1}`` as an attracting (k, n)-cylinder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cylinder import Cylinder
from .errors import DimensionError, InfeasibleError, InvalidInputError, StructuralError, UnboundedError
from .linalg_core import (
    REL_TOL,
    Definiteness,
    as_matrix,
    as_symmetric,
    definiteness,
    matrix_rank,
    pinv,
    rel_residual,
)
from .lmi import LmiProblem, SolverOptions, Status, bmat, maximize_logdet

#: Golden-section steps spent refining the best grid value of alpha.
REFINE_STEPS = 14


@dataclass(frozen=True)
class DisturbedSystem:
    """``x' = A x + B f`` with ``f^T G f <= 1``."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError("A must be square")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        B = B.reshape(n, -1) if B.size == 0 else as_matrix(B, "B")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        m = B.shape[1]
        G = np.asarray(self.G, dtype=float)
        G = np.zeros((0, 0)) if m == 0 and G.size == 0 else as_symmetric(G, "G")
        if G.shape != (m, m):
            raise DimensionError(f"G must be {m}x{m}")
        if m and definiteness(G).kind is not Definiteness.PD:
            raise InvalidInputError("disturbance bound G must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class Regularity:
    ok: bool
    residual: float
    rank: int

    def __bool__(self):
        return self.ok


def check_output_regularity(C, A, tol: float = REL_TOL) -> Regularity:
    """Full row rank of ``C`` and ``C A (I - C+ C) = 0`` (relative residual)."""
    C, A = as_matrix(C, "C"), as_matrix(A, "A")
    if C.shape[1] != A.shape[0] or A.shape[0] != A.shape[1]:
        raise DimensionError(f"C {C.shape} incompatible with A {A.shape}")
    n = A.shape[0]
    r = matrix_rank(C)
    CA = C @ A
    res = rel_residual(CA @ (np.eye(n) - pinv(C) @ C), CA)
    return Regularity(r == C.shape[0] and res <= tol, res, r)


def certificate_block(sys: DisturbedSystem, C, P, alpha: float) -> np.ndarray:
    """Assemble the certificate block matrix for given ``P`` and ``alpha``."""
    C = as_matrix(C, "C")
    P = as_symmetric(P, "P")
    X = C @ sys.A @ pinv(C)
    CB = C @ sys.B
    top = P @ X + X.T @ P + alpha * P
    blk = np.block([[top, P @ CB], [CB.T @ P, -alpha * sys.G]])
    return 0.5 * (blk + blk.T)


def verify_cylinder(sys: DisturbedSystem, C, P, alpha: float) -> float:
    """Largest eigenvalue of the certificate block; negative means certified."""
    C = as_matrix(C, "C")
    if C.shape[1] != sys.n:
        raise DimensionError(f"C has {C.shape[1]} columns, system has {sys.n} states")
    P = as_symmetric(P, "P")
    if P.shape != (C.shape[0], C.shape[0]):
        raise DimensionError(f"P must be {C.shape[0]}x{C.shape[0]}")
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    return float(np.linalg.eigvalsh(certificate_block(sys, C, P, alpha))[-1])


def default_alpha_grid(H: np.ndarray, points: int = 20) -> np.ndarray:
    """Log-spaced grid over ``[1e-2, 1e2]`` times the spectral scale of ``H``."""
    H = np.asarray(H, dtype=float)
    scale = float(np.max(np.abs(np.linalg.eigvals(H)))) if H.size else 0.0
    if not np.isfinite(scale) or scale <= 1e-12:
        scale = 1.0
    return np.logspace(-2, 2, points) * scale


@dataclass
class AttractingCylinderResult:
    P: np.ndarray
    alpha: float
    cylinder: Cylinder
    lmi_margin: float
    per_alpha: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.P.shape[0]

    @property
    def bound(self) -> float:
        """Largest squared semi-axis ``1 / lambda_min(P)`` of the output ellipsoid."""
        return 1.0 / float(np.linalg.eigvalsh(self.P)[0])

    @property
    def output_bounds(self) -> np.ndarray:
        """Per-component bounds ``|y_i| <= sqrt((P^-1)_ii)``."""
        return np.sqrt(np.diag(np.linalg.inv(self.P)))


def _solve_alpha(sys: DisturbedSystem, C: np.ndarray, alpha: float, options):
    k = C.shape[0]
    X = C @ sys.A @ pinv(C)
    CB = C @ sys.B
    prob = LmiProblem()
    P = prob.symmetric("P", k)
    blk = bmat([[P @ X + X.T @ P + P * alpha, P @ CB], [CB.T @ P, -alpha * sys.G]])
    prob.add(blk, "NEG_DEF", label="certificate")
    prob.add(P, "POS_DEF", label="P>0")
    # Shrinking P makes the coupling term quadratic and hence negligible, so a
    # strict certificate exists exactly when X + alpha/2 I is Hurwitz.  Testing
    # that up front spares the log-det solver the infeasible alphas, where it
    # would run to its iteration cap.
    if X.size and 2.0 * float(np.max(np.linalg.eigvals(X).real)) + alpha >= 0.0:
        return None
    try:
        sol = maximize_logdet(prob, P, options)
    except UnboundedError:
        return None
    if sol.status is not Status.FEASIBLE:
        return None
    return sol


def find_attracting_cylinder(sys: DisturbedSystem, C, alpha_grid=None, refine: bool = True,
                             options: SolverOptions | None = None) -> AttractingCylinderResult:
    """Smallest (by ``log det P``) certified cylinder over a grid of ``alpha``.

    After the grid pass the best ``alpha`` is refined by golden-section search
    on ``log(alpha)`` between its grid neighbours.
    """
    C = as_matrix(C, "C")
    if C.shape[1] != sys.n:
        raise DimensionError(f"C has {C.shape[1]} columns, system has {sys.n} states")
    reg = check_output_regularity(C, sys.A)
    if not reg:
        raise StructuralError(
            f"output map is not regular (rank {reg.rank}/{C.shape[0]}, residual {reg.residual:.3e})",
            residual=reg.residual,
        )
    if sys.B.shape[1] == 0 or not np.any(C @ sys.B):
        raise InvalidInputError("output is not excited by the disturbance; the cylinder degenerates")
    if alpha_grid is None:
        alpha_grid = default_alpha_grid(C @ sys.A @ pinv(C))
    grid = sorted(float(a) for a in alpha_grid)
    if not grid or any(a <= 0 for a in grid):
        raise InvalidInputError("alpha grid must be nonempty and positive")

    cache: dict[float, object] = {}

    def score(alpha):
        if alpha not in cache:
            cache[alpha] = _solve_alpha(sys, C, alpha, options)
        sol = cache[alpha]
        return -math.inf if sol is None else sol.objective

    table = []
    for a in grid:
        s = score(a)
        table.append({"alpha": a, "feasible": s > -math.inf, "logdet": s})
    feasible = [row for row in table if row["feasible"]]
    if not feasible:
        raise InfeasibleError("no alpha in the grid admits a certificate", details=table)
    # ties broken by the smallest alpha
    best_idx = max(range(len(grid)), key=lambda i: (score(grid[i]), -grid[i]))
    best = grid[best_idx]

    if refine and len(grid) > 1:
        lo = math.log(grid[max(best_idx - 1, 0)])
        hi = math.log(grid[min(best_idx + 1, len(grid) - 1)])
        g = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c_, d_ = b - g * (b - a), a + g * (b - a)
        for _ in range(REFINE_STEPS):
            if score(math.exp(c_)) >= score(math.exp(d_)):
                b, d_ = d_, c_
                c_ = b - g * (b - a)
            else:
                a, c_ = c_, d_
                d_ = a + g * (b - a)
        for cand in (math.exp(c_), math.exp(d_)):
            if score(cand) > score(best):
                best = cand

    sol = cache[best]
    P = sol["P"]
    cyl = Cylinder(C.T @ P @ C)
    margin = verify_cylinder(sys, C, P, best)
    return AttractingCylinderResult(P, best, cyl, margin, table)
