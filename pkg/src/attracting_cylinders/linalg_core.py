"""Dense real matrix primitives.

Rank decisions everywhere in the package go through a single relative
singular-value threshold: ``eps * max(rows, cols) * sigma_max`` unless an
explicit absolute ``rank_tol`` is given.  Symmetric eigen-decomposition backs
definiteness tests, square roots and bases; SVD backs the pseudoinverse.
"""

from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, InvalidInputError, NotPSDError

#: Relative residual tolerance shared by every solvability test.
REL_TOL = 1e-8

_EPS = np.finfo(float).eps


def as_matrix(M, name="matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array (scalars become 1x1)."""
    A = np.array(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(1, -1)
    elif A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def as_symmetric(S, name="matrix", tol=1e-9) -> np.ndarray:
    """Validate near-symmetry and return the exactly symmetrized matrix."""
    A = as_matrix(S, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got {A.shape}")
    scale = 1.0 + (np.abs(A).max() if A.size else 0.0)
    if A.size and np.abs(A - A.T).max() > tol * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return 0.5 * (A + A.T)


def norm2(M) -> float:
    """Spectral norm, 0 for empty matrices."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def rel_residual(R, scale) -> float:
    """``||R|| / (1 + ||scale||)`` with spectral norms."""
    return norm2(R) / (1.0 + norm2(scale))


def _svd_threshold(s: np.ndarray, shape, rank_tol: float) -> float:
    if rank_tol < 0:
        raise InvalidInputError("rank_tol must be >= 0")
    if rank_tol > 0:
        return rank_tol
    smax = s[0] if s.size else 0.0
    return _EPS * max(shape) * smax


def matrix_rank(M, rank_tol: float = 0.0) -> int:
    M = as_matrix(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > _svd_threshold(s, M.shape, rank_tol)))


def pinv(M, rank_tol: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below the threshold are treated as zero.  Empty
    matrices are handled: the pseudoinverse of an ``m x n`` matrix with a
    zero dimension is the ``n x m`` zero matrix.
    """
    M = as_matrix(M)
    m, n = M.shape
    if M.size == 0:
        return np.zeros((n, m))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    tol = _svd_threshold(s, M.shape, rank_tol)
    keep = s > tol
    if not np.any(keep):
        return np.zeros((n, m))
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def sqrt_psd(Q, tol: float = 1e-10) -> np.ndarray:
    """Symmetric PSD square root ``M`` with ``M @ M == Q``.

    Eigenvalues in ``[-tol * ||Q||, 0)`` are clamped to zero; anything more
    negative raises :class:`NotPSDError`.  Positive eigenvalues at roundoff
    level (relative to the largest) are zeroed as well.
    """
    Q = as_symmetric(Q, "Q")
    if Q.size == 0:
        return Q.copy()
    w, V = np.linalg.eigh(Q)
    bound = tol * max(norm2(Q), 1e-300)
    if w[0] < -bound:
        raise NotPSDError(f"matrix is not PSD: min eigenvalue {w[0]:.3e}")
    # eigenvalues at roundoff level are zero; their square roots would not be
    w = np.where(w > _EPS * Q.shape[0] * max(abs(w[-1]), 1e-300), w, 0.0)
    M = (V * np.sqrt(w)) @ V.T
    return 0.5 * (M + M.T)


class Definiteness(enum.Enum):
    PD = "PD"
    PSD = "PSD"
    INDEFINITE = "INDEFINITE"
    ND = "ND"
    NSD = "NSD"


class DefinitenessReport(NamedTuple):
    kind: Definiteness
    min_eig: float
    max_eig: float


def definiteness(S, margin: float = 0.0) -> DefinitenessReport:
    """Classify a symmetric matrix by the signs of its extreme eigenvalues.

    ``PD`` means ``min_eig > margin``; ``PSD`` means ``min_eig >= -margin``;
    the negative cases mirror these.  A zero matrix is reported ``PSD``.
    """
    if margin < 0:
        raise InvalidInputError("margin must be >= 0")
    S = as_symmetric(S, "S")
    if S.size == 0:
        return DefinitenessReport(Definiteness.PSD, 0.0, 0.0)
    w = np.linalg.eigvalsh(S)
    lo, hi = float(w[0]), float(w[-1])
    if lo > margin:
        kind = Definiteness.PD
    elif hi < -margin:
        kind = Definiteness.ND
    elif lo >= -margin:
        kind = Definiteness.PSD
    elif hi <= margin:
        kind = Definiteness.NSD
    else:
        kind = Definiteness.INDEFINITE
    return DefinitenessReport(kind, lo, hi)


def null_range_bases(M, rank_tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases of ``range(M)`` (columns in R^rows) and ``ker(M)`` (columns in R^cols)."""
    M = as_matrix(M)
    m, n = M.shape
    if M.size == 0:
        return np.zeros((m, 0)), np.eye(n)
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    r = int(np.sum(s > _svd_threshold(s, M.shape, rank_tol)))
    return U[:, :r].copy(), Vt[r:].T.copy()


def sym_eig_bases(S, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a PSD matrix into (eigenvalues on range, range basis, kernel basis).

    Eigenvalues ``<= tol * ||S||`` count as zero.
    """
    S = as_symmetric(S, "S")
    n = S.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0))
    w, V = np.linalg.eigh(S)
    cut = max(tol * norm2(S), _EPS * n * max(abs(w[-1]), abs(w[0])))
    keep = w > cut
    return w[keep], V[:, keep], V[:, ~keep]


def blkdiag(*blocks) -> np.ndarray:
    """Block-diagonal matrix that tolerates zero-sized blocks."""
    mats = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    rows = sum(b.shape[0] for b in mats)
    cols = sum(b.shape[1] for b in mats)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in mats:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out
