"""(k, n)-cylinders ``{x : x^T Q x <= 1}`` with ``Q >= 0`` of rank ``k``.

A cylinder is an ellipsoid living in ``range(Q)`` swept along ``ker(Q)``.
Images under full-row-rank linear maps are again cylinders; projections on
a coordinate plane are the whole plane, a strip, or an ellipse.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidInputError, NotPSDError, RankError
from .linalg_core import (
    as_matrix,
    as_symmetric,
    matrix_rank,
    norm2,
    pinv,
    sqrt_psd,
    sym_eig_bases,
)

#: Relative clamp threshold for roundoff-negative eigenvalues of computed forms.
CLAMP_TOL = 1e-10


def _clamp_psd(R: np.ndarray, tol: float = CLAMP_TOL, scale: float = 0.0, zero_below: float = 0.0) -> np.ndarray:
    """Symmetrize and clamp roundoff-negative eigenvalues to zero.

    The clamp window is ``tol * max(||R||, scale)``; ``scale`` lets callers
    supply the magnitude of the data ``R`` was computed from, which matters
    when ``R`` itself is pure roundoff.  Eigenvalues with magnitude at most
    ``zero_below`` are also set to zero.
    """
    R = 0.5 * (R + R.T)
    if R.size == 0:
        return R
    w, V = np.linalg.eigh(R)
    bound = tol * max(norm2(R), scale, 1e-300)
    if w[0] < -bound:
        raise NotPSDError(f"form has eigenvalue {w[0]:.3e} below -{bound:.1e}")
    if w[0] >= 0 and (zero_below <= 0 or not np.any(np.abs(w) <= zero_below)):
        return R
    w = np.where(w > zero_below, w, 0.0)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class Cylinder:
    """The set ``{x in R^n : x^T Q x <= 1}``.

    ``k`` (the rank of ``Q``) is computed at construction with the relative
    eigenvalue cut of :func:`sym_eig_bases`.
    """

    Q: np.ndarray
    k: int = field(init=False)

    def __post_init__(self):
        Q = _clamp_psd(as_symmetric(self.Q, "Q"))
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        w, _, _ = sym_eig_bases(Q)
        object.__setattr__(self, "k", int(w.size))

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def is_ellipsoid(self) -> bool:
        return self.k == self.n

    def contains(self, x) -> float:
        return contains(self, x)


def contains(c: Cylinder, x) -> float:
    """Quadratic-form value ``x^T Q x``; the point is inside iff the value is ``<= 1``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != c.n:
        raise DimensionError(f"point has dimension {x.shape[-1]}, cylinder has {c.n}")
    if x.ndim == 1:
        return float(x @ c.Q @ x)
    return np.einsum("...i,ij,...j->...", x, c.Q, x)


def decompose(c: Cylinder) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ellipsoid-plus-kernel decomposition.

    Returns ``(form, range_basis, kernel_basis)`` where ``form`` is the
    ``k x k`` positive definite restriction ``V_r^T Q V_r`` and both bases
    have orthonormal columns.
    """
    w, Vr, Vk = sym_eig_bases(c.Q)
    form = np.diag(w) if w.size else np.zeros((0, 0))
    return form, Vr, Vk


def split_point(c: Cylinder, x) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x = x_r + x_k`` along ``range(Q) (+) ker(Q)``."""
    _, Vr, Vk = decompose(c)
    x = np.asarray(x, dtype=float)
    return Vr @ (Vr.T @ x), Vk @ (Vk.T @ x)


def image(c: Cylinder, C, rank_tol: float = 0.0) -> Cylinder:
    """Image of the cylinder under ``y = C x`` for full-row-rank ``C``.

    Uses ``R = C+^T M (I - (MN)(MN)+) M C+`` with ``M = Q^(1/2)`` and
    ``N = I - C+ C``.
    """
    C = as_matrix(C, "C")
    m, n = C.shape
    if n != c.n:
        raise DimensionError(f"map has {n} columns, cylinder dimension is {c.n}")
    if matrix_rank(C, rank_tol) != m:
        raise RankError(f"map must have full row rank {m}")
    Cp = pinv(C, rank_tol)
    M = sqrt_psd(c.Q)
    N = np.eye(n) - Cp @ C
    MN = M @ N
    # the rank of M N is decided relative to ||M||, not to the (possibly tiny) ||M N||
    cut = rank_tol or 100.0 * np.finfo(float).eps * n * max(norm2(M), 1e-300)
    inner = np.eye(n) - MN @ pinv(MN, cut)
    R = Cp.T @ M @ inner @ M @ Cp
    scale = norm2(M) ** 2 * norm2(Cp) ** 2
    return Cylinder(_clamp_psd(R, scale=scale, zero_below=1e3 * np.finfo(float).eps * n * scale))


class ShapeKind(enum.Enum):
    WHOLE_PLANE = 0
    STRIP = 1
    ELLIPSE = 2


@dataclass(frozen=True)
class ProjectionShape:
    kind: ShapeKind
    form: np.ndarray

    def strip_parameters(self):
        """Unit normal ``v`` and half-width ``h`` of a strip ``|v^T y| <= h``."""
        if self.kind is not ShapeKind.STRIP:
            raise InvalidInputError("not a strip")
        w, V = np.linalg.eigh(self.form)
        return V[:, -1], 1.0 / np.sqrt(w[-1])

    def boundary(self, n_points: int = 256, extent: float | None = None) -> list[np.ndarray]:
        """Boundary curves as arrays of 2-D points.

        Ellipse: one closed curve.  Strip: two parallel segments of length
        ``2 * extent`` centred on the foot of the normal.  Whole plane: none.
        """
        if self.kind is ShapeKind.WHOLE_PLANE:
            return []
        if self.kind is ShapeKind.ELLIPSE:
            w, V = np.linalg.eigh(self.form)
            th = np.linspace(0.0, 2.0 * np.pi, n_points)
            circle = np.stack([np.cos(th), np.sin(th)])
            return [((V / np.sqrt(w)) @ circle).T]
        v, h = self.strip_parameters()
        d = np.array([-v[1], v[0]])
        L = 10.0 * h if extent is None else float(extent)
        s = np.linspace(-L, L, n_points)[:, None]
        return [h * v + s * d, -h * v + s * d]


def project_to_plane(c: Cylinder, axes: tuple[int, int]) -> ProjectionShape:
    """Projection on the coordinate plane spanned by ``axes`` (0-based)."""
    i, j = (int(a) for a in axes)
    if c.n < 2:
        raise InvalidInputError("projection needs n >= 2")
    if i == j or not (0 <= i < c.n and 0 <= j < c.n):
        raise InvalidInputError(f"invalid axes {axes} for n={c.n}")
    S = np.zeros((2, c.n))
    S[0, i] = 1.0
    S[1, j] = 1.0
    img = image(c, S)
    return ProjectionShape(ShapeKind(img.k), img.Q)
