"""Small dense LMI modeling layer.

Decision variables (symmetric, rectangular, scalar) are vectorized once
into a flat parameter vector; every affine matrix expression stores its
constant part and one coefficient slab per variable.  Constraints are
assembled into cvxopt's cone form and solved with its dense primal-dual
interior-point method.  Every reported ``FEASIBLE`` status is re-checked by
direct eigenvalue evaluation, independently of the solver's own status.

Example
-------
>>> prob = LmiProblem()
>>> P = prob.symmetric("P", 2)
>>> A = -np.eye(2)
>>> prob.add(A.T @ P + P @ A + np.eye(2), "NEG_DEF")
>>> sol = solve_feasibility(prob)
>>> sol.status
<Status.FEASIBLE: 'FEASIBLE'>
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from numbers import Real

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers

from .errors import LmiStructureError, UnboundedError
from .linalg_core import norm2

UNBOUNDED_BELOW = -1e12


class Sense(enum.Enum):
    NEG_DEF = "NEG_DEF"
    POS_DEF = "POS_DEF"
    POS_SEMIDEF = "POS_SEMIDEF"


class Status(enum.Enum):
    FEASIBLE = "FEASIBLE"
    INFEASIBLE = "INFEASIBLE"
    MAX_ITER = "MAX_ITER"


class VarKind(enum.Enum):
    SYMMETRIC = "SYMMETRIC"
    RECTANGULAR = "RECTANGULAR"
    SCALAR = "SCALAR"


@dataclass(frozen=True)
class LmiVariable:
    name: str
    kind: VarKind
    rows: int
    cols: int
    basis: np.ndarray  # (rows, cols, n_params)

    @property
    def size(self) -> int:
        return self.basis.shape[2]

    def value_from(self, params: np.ndarray):
        val = self.basis @ params
        if self.kind is VarKind.SCALAR:
            return float(val[0, 0])
        if self.kind is VarKind.SYMMETRIC:
            val = 0.5 * (val + val.T)
        return val


def _symmetric_basis(d: int, mask=None) -> np.ndarray:
    mats = []
    for j in range(d):
        for i in range(j, d):
            if mask is not None and not mask[i, j]:
                continue
            E = np.zeros((d, d))
            E[i, j] = E[j, i] = 1.0
            mats.append(E)
    if not mats:
        return np.zeros((d, d, 0))
    return np.stack(mats, axis=2)


def _rect_basis(r: int, c: int, mask=None) -> np.ndarray:
    mats = []
    for j in range(c):
        for i in range(r):
            if mask is not None and not mask[i, j]:
                continue
            E = np.zeros((r, c))
            E[i, j] = 1.0
            mats.append(E)
    if not mats:
        return np.zeros((r, c, 0))
    return np.stack(mats, axis=2)


class Affine:
    """Affine matrix expression ``const + sum_v coeff_v(params_v)``."""

    __array_ufunc__ = None

    def __init__(self, const, terms=None):
        self.const = np.asarray(const, dtype=float)
        if self.const.ndim != 2:
            raise LmiStructureError("affine expressions are 2-D")
        self.terms: dict[str, tuple[LmiVariable, np.ndarray]] = dict(terms or {})

    @classmethod
    def of(cls, var: LmiVariable) -> "Affine":
        return cls(np.zeros((var.rows, var.cols)), {var.name: (var, var.basis)})

    @property
    def shape(self):
        return self.const.shape

    @staticmethod
    def _lift(other, shape) -> "Affine":
        if isinstance(other, Affine):
            return other
        if isinstance(other, Real):
            if shape != (1, 1) and other != 0:
                raise LmiStructureError("scalar can only be added to a 1x1 expression")
            return Affine(np.full(shape, float(other)))
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        return Affine(arr)

    def _combine(self, other: "Affine", sign: float) -> "Affine":
        if other.shape != self.shape:
            raise LmiStructureError(f"shape mismatch {self.shape} vs {other.shape}")
        terms = dict(self.terms)
        for name, (var, coef) in other.terms.items():
            if name in terms:
                terms[name] = (var, terms[name][1] + sign * coef)
            else:
                terms[name] = (var, sign * coef)
        return Affine(self.const + sign * other.const, terms)

    def __add__(self, other):
        return self._combine(self._lift(other, self.shape), 1.0)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self._combine(self._lift(other, self.shape), -1.0)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return Affine(-self.const, {n: (v, -c) for n, (v, c) in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, Affine):
            raise LmiStructureError("product of two affine expressions is not affine")
        if isinstance(other, Real):
            a = float(other)
            return Affine(a * self.const, {n: (v, a * c) for n, (v, c) in self.terms.items()})
        W = np.asarray(other, dtype=float)
        if self.shape != (1, 1):
            raise LmiStructureError("elementwise scaling needs a 1x1 expression")
        return Affine(
            self.const[0, 0] * W,
            {n: (v, W[:, :, None] * c[0, 0][None, None, :]) for n, (v, c) in self.terms.items()},
        )

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, R):
        if isinstance(R, Affine):
            raise LmiStructureError("product of two affine expressions is not affine")
        R = np.asarray(R, dtype=float)
        if R.shape[0] != self.shape[1]:
            raise LmiStructureError(f"cannot right-multiply {self.shape} by {R.shape}")
        return Affine(
            self.const @ R,
            {n: (v, np.einsum("ijp,jk->ikp", c, R)) for n, (v, c) in self.terms.items()},
        )

    def __rmatmul__(self, L):
        L = np.asarray(L, dtype=float)
        if L.shape[1] != self.shape[0]:
            raise LmiStructureError(f"cannot left-multiply {self.shape} by {L.shape}")
        return Affine(
            L @ self.const,
            {n: (v, np.einsum("ij,jkp->ikp", L, c)) for n, (v, c) in self.terms.items()},
        )

    @property
    def T(self) -> "Affine":
        return Affine(self.const.T, {n: (v, c.transpose(1, 0, 2)) for n, (v, c) in self.terms.items()})

    def trace(self) -> "Affine":
        if self.shape[0] != self.shape[1]:
            raise LmiStructureError("trace of a non-square expression")
        return Affine(
            np.array([[np.trace(self.const)]]),
            {n: (v, np.trace(c)[None, None, :]) for n, (v, c) in self.terms.items()},
        )

    def value(self, assignment: dict) -> np.ndarray:
        out = self.const.copy()
        for name, (var, coef) in self.terms.items():
            x = np.atleast_2d(np.asarray(assignment[name], dtype=float))
            params = _params_of(var, x)
            out = out + coef @ params
        return out


def _params_of(var: LmiVariable, X: np.ndarray) -> np.ndarray:
    B = var.basis.reshape(-1, var.size)
    p, *_ = np.linalg.lstsq(B, X.reshape(-1), rcond=None)
    return p


def sym(expr: Affine) -> Affine:
    """``expr + expr^T``."""
    return expr + expr.T


def bmat(blocks) -> Affine:
    """Assemble a block matrix from Affine expressions, arrays, or ``None`` (zeros)."""
    nr, nc = len(blocks), len(blocks[0])
    heights = [None] * nr
    widths = [None] * nc
    for i, row in enumerate(blocks):
        if len(row) != nc:
            raise LmiStructureError("ragged block rows")
        for j, b in enumerate(row):
            if b is None:
                continue
            shp = b.shape if isinstance(b, Affine) else np.atleast_2d(np.asarray(b, float)).shape
            for lst, idx, val in ((heights, i, shp[0]), (widths, j, shp[1])):
                if lst[idx] is None:
                    lst[idx] = val
                elif lst[idx] != val:
                    raise LmiStructureError(f"inconsistent block sizes at ({i},{j})")
    if None in heights or None in widths:
        raise LmiStructureError("cannot infer size of an all-None block row/column")
    H, W = sum(heights), sum(widths)
    const = np.zeros((H, W))
    terms: dict[str, tuple[LmiVariable, np.ndarray]] = {}
    r0 = 0
    for i, row in enumerate(blocks):
        c0 = 0
        for j, b in enumerate(row):
            h, w = heights[i], widths[j]
            if b is not None:
                a = b if isinstance(b, Affine) else Affine(np.atleast_2d(np.asarray(b, float)))
                const[r0:r0 + h, c0:c0 + w] = a.const
                for name, (var, coef) in a.terms.items():
                    if name not in terms:
                        terms[name] = (var, np.zeros((H, W, var.size)))
                    terms[name][1][r0:r0 + h, c0:c0 + w, :] += coef
            c0 += w
        r0 += h
    return Affine(const, terms)


@dataclass
class LmiConstraint:
    expr: Affine
    sense: Sense
    margin: float
    label: str = ""


@dataclass
class SolverOptions:
    max_iter: int = 200
    #: bound on the Euclidean norm of the flat parameter vector (feasibility mode only)
    var_bound: float = 1e8
    #: cap on the uniform slack sought in feasibility mode
    slack_cap: float = 1.0
    #: weight of ``||x||`` in the feasibility objective (selects a bounded optimum)
    norm_weight: float = 1e-9
    abstol: float = 1e-8
    reltol: float = 1e-7
    feastol: float = 1e-8
    #: relative tolerance for POS_SEMIDEF constraints in the eigenvalue re-check
    psd_tol: float = 1e-9


@dataclass
class LmiSolution:
    assignment: dict
    status: Status
    worst_margin: float
    iterations: int = 0
    objective: float | None = None
    solver_status: str = ""
    violations: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.assignment[name]

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


class LmiProblem:
    """Container of decision variables and affine matrix-inequality constraints."""

    def __init__(self):
        self.variables: dict[str, LmiVariable] = {}
        self.constraints: list[LmiConstraint] = []

    def _register(self, var: LmiVariable) -> Affine:
        if var.name in self.variables:
            raise LmiStructureError(f"duplicate variable name {var.name!r}")
        self.variables[var.name] = var
        return Affine.of(var)

    def symmetric(self, name: str, d: int, mask=None) -> Affine:
        if mask is not None:
            mask = np.asarray(mask, bool)
            mask = mask & mask.T
        return self._register(LmiVariable(name, VarKind.SYMMETRIC, d, d, _symmetric_basis(d, mask)))

    def rectangular(self, name: str, rows: int, cols: int, mask=None) -> Affine:
        if mask is not None:
            mask = np.asarray(mask, bool)
        return self._register(LmiVariable(name, VarKind.RECTANGULAR, rows, cols, _rect_basis(rows, cols, mask)))

    def scalar(self, name: str) -> Affine:
        return self._register(LmiVariable(name, VarKind.SCALAR, 1, 1, np.ones((1, 1, 1))))

    def add(self, expr, sense="NEG_DEF", margin: float | None = None, label: str = "") -> LmiConstraint:
        """Add ``expr < 0`` (``NEG_DEF``), ``expr > 0`` (``POS_DEF``) or ``expr >= 0``.

        Strict senses default to ``margin = 1e-6 * (1 + ||const||)``; the
        semidefinite sense defaults to zero.
        """
        sense = Sense(sense) if not isinstance(sense, Sense) else sense
        if not isinstance(expr, Affine):
            expr = Affine(np.atleast_2d(np.asarray(expr, float)))
        r, c = expr.shape
        if r != c:
            raise LmiStructureError(f"constraint must be square, got {expr.shape}")
        scale = 1.0 + norm2(expr.const)
        if expr.const.size and np.abs(expr.const - expr.const.T).max() > 1e-10 * scale:
            raise LmiStructureError(f"constraint {label!r} has a non-symmetric constant part")
        for name, (var, coef) in expr.terms.items():
            if coef.size and np.abs(coef - coef.transpose(1, 0, 2)).max() > 1e-10 * (1 + np.abs(coef).max()):
                raise LmiStructureError(f"constraint {label!r} is not symmetric in {name!r}")
            if name not in self.variables or self.variables[name] is not var:
                raise LmiStructureError(f"variable {name!r} is not owned by this problem")
        if margin is None:
            margin = 0.0 if sense is Sense.POS_SEMIDEF else 1e-6 * scale
        if margin < 0:
            raise LmiStructureError("margin must be >= 0")
        con = LmiConstraint(expr, sense, float(margin), label)
        self.constraints.append(con)
        return con

    # -- vectorization -----------------------------------------------------

    def layout(self) -> dict[str, slice]:
        out, off = {}, 0
        for name, var in self.variables.items():
            out[name] = slice(off, off + var.size)
            off += var.size
        return out

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.variables.values())

    def flatten(self, expr: Affine) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(F0, F)`` with ``vec(expr) = F0 + F @ x`` in column-major order."""
        lay = self.layout()
        r, c = expr.shape
        F = np.zeros((r * c, self.n_params))
        for name, (var, coef) in expr.terms.items():
            F[:, lay[name]] = coef.reshape(r * c, var.size, order="F")
        return expr.const.reshape(-1, order="F"), F

    def unflatten(self, x: np.ndarray) -> dict:
        lay = self.layout()
        return {name: var.value_from(x[lay[name]]) for name, var in self.variables.items()}

    def evaluate(self, assignment: dict) -> list[tuple[LmiConstraint, float, float]]:
        """Per constraint: (constraint, min eigenvalue, max eigenvalue)."""
        out = []
        for con in self.constraints:
            S = con.expr.value(assignment)
            S = 0.5 * (S + S.T)
            w = np.linalg.eigvalsh(S) if S.size else np.zeros(1)
            out.append((con, float(w[0]), float(w[-1])))
        return out

    def check(self, assignment: dict, psd_tol: float = 1e-9) -> tuple[bool, float, list]:
        """Solver-independent eigenvalue re-check.

        Returns ``(ok, worst_margin, violations)`` where ``worst_margin`` is the
        largest signed violation: ``lambda_max + margin`` for ``NEG_DEF`` and
        ``margin - lambda_min`` for the positive senses.
        """
        worst = -np.inf
        ok = True
        bad = []
        for con, lo, hi in self.evaluate(assignment):
            if con.sense is Sense.NEG_DEF:
                v = hi + con.margin
                good = v <= 0.0
            elif con.sense is Sense.POS_DEF:
                v = con.margin - lo
                good = v <= 0.0
            else:
                v = con.margin - lo
                scale = 1.0 + norm2(con.expr.value(assignment))
                good = v <= psd_tol * scale
            worst = max(worst, v)
            if not good:
                ok = False
                bad.append((con.label, v))
        return ok, float(worst if np.isfinite(worst) else 0.0), bad


# -- cone assembly -------------------------------------------------------------


#: The cones enforce this multiple of each margin so that iterates ending on
#: the (tightened) boundary still pass the exact eigenvalue re-check.
MARGIN_HEADROOM = 1.5


def _cone_blocks(prob: LmiProblem, with_slack: bool):
    """Rows of ``G x + s = h`` for every constraint (PSD cones only)."""
    G_rows, h_rows, dims = [], [], []
    n = prob.n_params
    for con in prob.constraints:
        d = con.expr.shape[0]
        if d == 0:
            continue
        F0, F = prob.flatten(con.expr)
        I = np.eye(d).reshape(-1, order="F")
        m = MARGIN_HEADROOM * con.margin
        if con.sense is Sense.NEG_DEF:
            # s = -F0 - m I - F x + t I
            Gx, h, gt = F, -F0 - m * I, -I
        else:
            # s = F0 - m I + F x + t I
            Gx, h, gt = -F, F0 - m * I, -I
        if with_slack:
            Gx = np.hstack([Gx, gt[:, None]])
        G_rows.append(Gx)
        h_rows.append(h)
        dims.append(d)
    width = n + (1 if with_slack else 0)
    G = np.vstack(G_rows) if G_rows else np.zeros((0, width))
    h = np.concatenate(h_rows) if h_rows else np.zeros(0)
    return G, h, dims


def _solver_options(opts: SolverOptions) -> dict:
    return {
        "show_progress": False,
        "maxiters": int(opts.max_iter),
        "abstol": opts.abstol,
        "reltol": opts.reltol,
        "feastol": opts.feastol,
    }


def _finish(prob, x, sol, opts, objective=None, slack=None) -> LmiSolution:
    assignment = prob.unflatten(x)
    ok, worst, bad = prob.check(assignment, opts.psd_tol)
    status_str = sol.get("status", "")
    iters = int(sol.get("iterations", 0) or 0)
    if ok:
        status = Status.FEASIBLE
    elif status_str == "primal infeasible" or (slack is not None and status_str == "optimal" and slack > 0):
        status = Status.INFEASIBLE
    else:
        status = Status.MAX_ITER
    return LmiSolution(assignment, status, worst, iters, objective, status_str, bad)


def _conelp(c, G, h, dims, opts: SolverOptions) -> dict:
    args = (cvx_matrix(c), cvx_matrix(G), cvx_matrix(h), dims)
    try:
        return solvers.conelp(*args, options=_solver_options(opts))
    except ArithmeticError:
        # tight tolerances can stall on degenerate faces; retry at solver defaults
        try:
            return solvers.conelp(*args, options={"show_progress": False, "maxiters": int(opts.max_iter)})
        except ArithmeticError:
            return {"status": "unknown", "x": None, "iterations": opts.max_iter}


def solve_feasibility(prob: LmiProblem, options: SolverOptions | None = None) -> LmiSolution:
    """Find a point satisfying every constraint with its margin.

    Minimizes a uniform slack ``t`` (capped below at ``-slack_cap``) added to
    every constraint, plus a tiny multiple of ``||x||`` so that the optimum
    is unique and bounded.  The result is ``FEASIBLE`` only if the eigenvalue
    re-check passes.
    """
    opts = options or SolverOptions()
    if not prob.constraints:
        raise LmiStructureError("problem has no constraints")
    n = prob.n_params
    Gs, hs, sdims = _cone_blocks(prob, with_slack=True)
    # variables: (x, t, r)
    Gs = np.hstack([Gs, np.zeros((Gs.shape[0], 1))])
    Gl = np.zeros((2, n + 2))
    Gl[0, n] = -1.0  # -t <= slack_cap
    Gl[1, n + 1] = 1.0  # r <= var_bound
    hl = np.array([opts.slack_cap, opts.var_bound])
    Gq = np.zeros((n + 1, n + 2))
    Gq[0, n + 1] = -1.0
    Gq[1:, :n] = -np.eye(n)
    hq = np.zeros(n + 1)
    G = np.vstack([Gl, Gq, Gs])
    h = np.concatenate([hl, hq, hs])
    c = np.zeros(n + 2)
    c[n] = 1.0
    c[n + 1] = opts.norm_weight
    dims = {"l": 2, "q": [n + 1], "s": sdims}
    sol = _conelp(c, G, h, dims, opts)
    if sol["x"] is None:
        return LmiSolution(prob.unflatten(np.zeros(n)), Status.MAX_ITER, np.inf, opts.max_iter,
                           solver_status=sol["status"])
    x = np.array(sol["x"]).ravel()
    out = _finish(prob, x[:n], sol, opts, slack=float(x[n]))
    out.objective = float(x[n])
    return out


def minimize(prob: LmiProblem, objective: Affine, options: SolverOptions | None = None) -> LmiSolution:
    """Minimize a linear functional (a 1x1 affine expression) subject to the constraints."""
    opts = options or SolverOptions()
    if not prob.constraints:
        raise LmiStructureError("problem has no constraints")
    if objective.shape != (1, 1):
        raise LmiStructureError("objective must be a 1x1 affine expression")
    n = prob.n_params
    _, cvec = prob.flatten(objective)
    c0 = float(objective.const[0, 0])
    G, h, sdims = _cone_blocks(prob, with_slack=False)
    dims = {"l": 0, "q": [], "s": sdims}
    sol = _conelp(cvec.ravel(), G, h, dims, opts)
    if sol["status"] == "dual infeasible":
        raise UnboundedError("objective is unbounded below")
    if sol["x"] is None:
        return LmiSolution(prob.unflatten(np.zeros(n)), Status.INFEASIBLE, np.inf, solver_status=sol["status"])
    x = np.array(sol["x"]).ravel()
    val = float(cvec.ravel() @ x) + c0
    if val < UNBOUNDED_BELOW:
        raise UnboundedError(f"objective decreased to {val:.3e}")
    return _finish(prob, x, sol, opts, objective=val)


def maximize_logdet(prob: LmiProblem, var: Affine, options: SolverOptions | None = None) -> LmiSolution:
    """Maximize ``log det`` of a symmetric variable subject to the constraints."""
    opts = options or SolverOptions()
    if len(var.terms) != 1:
        raise LmiStructureError("log-det objective needs a single symmetric variable")
    (name, (v, _)), = var.terms.items()
    if v.kind is not VarKind.SYMMETRIC:
        raise LmiStructureError("log-det objective needs a symmetric variable")
    n = prob.n_params
    sl = prob.layout()[name]
    basis = v.basis
    G, h, sdims = _cone_blocks(prob, with_slack=False)
    dims = {"l": 0, "q": [], "s": sdims}
    x0 = np.zeros(n)
    x0[sl] = _params_of(v, np.eye(v.rows))

    def F(x=None, z=None):
        if x is None:
            return 0, cvx_matrix(x0)
        xv = np.array(x).ravel()
        P = basis @ xv[sl]
        P = 0.5 * (P + P.T)
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            return None
        Pinv = np.linalg.inv(P)
        f = -2.0 * np.sum(np.log(np.diag(L)))
        Df = np.zeros((1, n))
        Df[0, sl] = -np.einsum("ij,jip->p", Pinv, basis)
        if z is None:
            return cvx_matrix(f), cvx_matrix(Df)
        A = np.einsum("ij,jkp->ikp", Pinv, basis)
        Hs = np.einsum("ijp,jiq->pq", A, A)
        H = np.zeros((n, n))
        H[sl, sl] = float(z[0]) * Hs
        return cvx_matrix(f), cvx_matrix(Df), cvx_matrix(H)

    sol = None
    for o in (_solver_options(opts), {"show_progress": False, "maxiters": int(opts.max_iter)}):
        try:
            sol = solvers.cp(F, cvx_matrix(G), cvx_matrix(h), dims, options=o)
            break
        except (ArithmeticError, ValueError):
            continue
    if sol is None or sol.get("x") is None:
        return LmiSolution(prob.unflatten(x0), Status.MAX_ITER, np.inf, opts.max_iter,
                           objective=-np.inf, solver_status="failed")
    x = np.array(sol["x"]).ravel()
    P = basis @ x[sl]
    sign, logdet = np.linalg.slogdet(0.5 * (P + P.T))
    out = _finish(prob, x, sol, opts, objective=float(logdet) if sign > 0 else -np.inf)
    if out.objective > -UNBOUNDED_BELOW:
        raise UnboundedError("log det is unbounded above")
    return out
