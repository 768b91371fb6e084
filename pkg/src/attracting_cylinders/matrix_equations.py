"""Linear matrix equation ``A X B = C`` and the two-sided inequality test.

``solve_axb`` decides solvability through ``A A+ C B+ B = C`` and returns
the full solution family ``X(Y) = A+ C B+ + Y - A+ A Y B B+``.

``strict_lyap_solvable`` decides whether ``A X B + (A X B)^T + C < 0`` has a
solution by checking ``C < mu1 A A^T`` and ``C < mu2 B^T B``; each one-sided
condition holds for some finite ``mu`` iff ``C`` restricted to ``ker(A^T)``
(resp. ``ker(B)``) is negative definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg_core import (
    REL_TOL,
    Definiteness,
    as_matrix,
    as_symmetric,
    definiteness,
    norm2,
    null_range_bases,
    pinv,
    rel_residual,
)


@dataclass(frozen=True)
class AxbSolution:
    solvable: bool
    X0: np.ndarray
    projector_left: np.ndarray
    projector_right: np.ndarray
    residual: float

    def solution(self, Y) -> np.ndarray:
        """Member of the solution family for the free parameter ``Y``."""
        Y = np.asarray(Y, dtype=float)
        return self.X0 + Y - self.projector_left @ Y @ self.projector_right


def solve_axb(A, B, C, rank_tol: float = 0.0, tol: float = REL_TOL) -> AxbSolution:
    A, B, C = as_matrix(A, "A"), as_matrix(B, "B"), as_matrix(C, "C")
    if A.shape[0] != C.shape[0] or B.shape[1] != C.shape[1]:
        raise DimensionError(f"A {A.shape}, B {B.shape} and C {C.shape} are not conformable")
    Ap, Bp = pinv(A, rank_tol), pinv(B, rank_tol)
    res = rel_residual(A @ Ap @ C @ Bp @ B - C, C)
    return AxbSolution(
        solvable=res <= tol,
        X0=Ap @ C @ Bp,
        projector_left=Ap @ A,
        projector_right=B @ Bp,
        residual=res,
    )


def _min_mu(C: np.ndarray, A: np.ndarray, rank_tol: float):
    """Smallest ``mu`` with ``C - mu A A^T < 0`` (or ``None`` if no finite one).

    Works in the orthonormal basis ``[range(A), ker(A^T)]``: with ``L`` the
    (positive definite) restriction of ``A A^T`` to its range and ``S`` the
    Schur complement of the kernel block, the answer is the largest
    generalized eigenvalue of ``(S, L)``.  Returns ``(mu, kernel_ok, reliable)``.
    """
    Rb, _ = null_range_bases(A, rank_tol)
    _, Nb = null_range_bases(A.T, rank_tol)
    Cnn = Nb.T @ C @ Nb
    kernel_ok = definiteness(Cnn).kind is Definiteness.ND if Cnn.size else True
    if not kernel_ok:
        return None, False, True
    if Rb.shape[1] == 0:
        return -np.inf, True, True
    Crr = Rb.T @ C @ Rb
    Crn = Rb.T @ C @ Nb
    L = Rb.T @ A @ A.T @ Rb
    reliable = True
    if Cnn.size:
        wn = np.linalg.eigvalsh(Cnn)
        if abs(wn[-1]) < 1e-10 * (1.0 + norm2(C)):
            reliable = False
        S = Crr - Crn @ np.linalg.solve(Cnn, Crn.T)
    else:
        S = Crr
    wl, Vl = np.linalg.eigh(L)
    Li = Vl / np.sqrt(wl)
    T = Li.T @ S @ Li
    mu = float(np.linalg.eigvalsh(0.5 * (T + T.T))[-1])
    return mu, True, reliable


def _witness(C, A, mu_min, reliable, headroom=0.1):
    """Concrete ``mu`` certified by an eigenvalue check, or ``None``."""
    AAt = A @ A.T

    def ok(mu):
        return definiteness(C - mu * AAt).kind is Definiteness.ND

    if mu_min is not None and reliable:
        mu = 0.0 if mu_min < 0 else mu_min * (1.0 + headroom) + 1e-12 * (1.0 + norm2(C))
        if ok(mu):
            return mu
    # bisection on log10(mu) over [1e-12, 1e12]
    if ok(0.0):
        return 0.0
    lo, hi = -12.0, 12.0
    if not ok(10.0 ** hi):
        return None
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if ok(10.0 ** mid):
            hi = mid
        else:
            lo = mid
    return 10.0 ** hi


@dataclass(frozen=True)
class LyapSolvability:
    feasible: bool
    mu1: float | None
    mu2: float | None

    def __iter__(self):
        return iter((self.feasible, self.mu1, self.mu2))


def strict_lyap_solvable(A, B, C, rank_tol: float = 0.0) -> LyapSolvability:
    """Decide solvability of ``A X B + (A X B)^T + C < 0`` in ``X``.

    Returns witnesses ``mu1``, ``mu2`` with ``C < mu1 A A^T`` and
    ``C < mu2 B^T B`` (10 % headroom over the generalized-eigenvalue bound),
    or ``None`` for a side that fails.
    """
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    C = as_symmetric(C, "C")
    n = C.shape[0]
    if A.shape[0] != n or B.shape[1] != n:
        raise DimensionError(f"A {A.shape}, B {B.shape} not conformable with C {C.shape}")
    mu1_min, ok1, rel1 = _min_mu(C, A, rank_tol)
    mu2_min, ok2, rel2 = _min_mu(C, B.T, rank_tol)
    mu1 = _witness(C, A, mu1_min, rel1) if ok1 else None
    mu2 = _witness(C, B.T, mu2_min, rel2) if ok2 else None
    return LyapSolvability(mu1 is not None and mu2 is not None, mu1, mu2)
