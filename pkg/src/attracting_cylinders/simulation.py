"""Fixed-step simulation of ``s' = M s + N f(t)`` and cylinder-membership traces.

Integration is classical fourth-order Runge-Kutta on a uniform grid.  The
forcing is evaluated at every stage time.  Steps that straddle a known jump
of a square-wave channel are split at the jump so that the scheme keeps its
order; the output grid stays uniform.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cylinder import Cylinder, ProjectionShape, ShapeKind, project_to_plane
from .errors import DimensionError, DivergedError, InvalidInputError
from . import kernels
from .kernels import rk4_lti
from .linalg_core import as_matrix, as_symmetric

#: Tolerance of the disturbance admissibility audit ``f^T G f <= 1 + tol``.
ADMISSIBILITY_TOL = 1e-9
#: Allowed overshoot of the membership value after entry.
INVARIANCE_TOL = 1e-6
#: Fraction of the horizon counted as the tail for the attraction check.
TAIL_FRACTION = 0.2


class SignalKind(enum.Enum):
    SINE = "sine"
    SQUARE_SGN_SINE = "square"
    CONSTANT = "constant"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class SignalSpec:
    """One disturbance channel.

    * ``SINE``: ``amplitude * sin(omega t)``
    * ``SQUARE_SGN_SINE``: ``offset + amplitude * sgn(sin(omega t))``
    * ``CONSTANT``: ``value``
    * ``SAMPLED``: linear interpolation of ``(times, values)``, held constant
      outside the sampled range
    """

    kind: SignalKind
    amplitude: float = 1.0
    omega: float = 1.0
    offset: float = 0.0
    value: float = 0.0
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        kind = SignalKind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("amplitude", "omega", "offset", "value"):
            if not math.isfinite(float(getattr(self, name))):
                raise InvalidInputError(f"signal {name} must be finite")
        if kind is SignalKind.SAMPLED:
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size == 0:
                raise InvalidInputError("sampled signal needs equal-length 1-D times and values")
            if np.any(np.diff(t) <= 0) or not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
                raise InvalidInputError("sample times must be finite and strictly increasing")
            object.__setattr__(self, "times", tuple(t.tolist()))
            object.__setattr__(self, "values", tuple(v.tolist()))

    @classmethod
    def sine(cls, amplitude: float = 1.0, omega: float = 1.0) -> "SignalSpec":
        return cls(SignalKind.SINE, amplitude=amplitude, omega=omega)

    @classmethod
    def square(cls, offset: float = 0.0, amplitude: float = 1.0, omega: float = 1.0) -> "SignalSpec":
        return cls(SignalKind.SQUARE_SGN_SINE, amplitude=amplitude, omega=omega, offset=offset)

    @classmethod
    def constant(cls, value: float) -> "SignalSpec":
        return cls(SignalKind.CONSTANT, value=value)

    @classmethod
    def sampled(cls, times, values) -> "SignalSpec":
        return cls(SignalKind.SAMPLED, times=tuple(times), values=tuple(values))

    def __call__(self, t) -> np.ndarray:
        """Signal value at the times ``t`` (``sgn(0) = 0`` for the square wave)."""
        t = np.asarray(t, dtype=float)
        k = self.kind
        if k is SignalKind.SINE:
            return self.amplitude * np.sin(self.omega * t)
        if k is SignalKind.SQUARE_SGN_SINE:
            return self.offset + self.amplitude * np.sign(np.sin(self.omega * t))
        if k is SignalKind.CONSTANT:
            return np.full(t.shape, float(self.value))
        return np.interp(t, self.times, self.values)

    def on_interval(self, t, lo, hi) -> np.ndarray:
        """Value at ``t`` for ``t`` in ``[lo, hi]``, a jump-free interval.

        Jump parts are frozen at their value on the open interval, so the
        endpoints receive the one-sided limits.
        """
        if self.kind is not SignalKind.SQUARE_SGN_SINE:
            return self(t)
        mid = 0.5 * (np.asarray(lo, dtype=float) + np.asarray(hi, dtype=float))
        level = self.offset + self.amplitude * np.sign(np.sin(self.omega * mid))
        return np.broadcast_to(level, np.broadcast(np.asarray(t), mid).shape).astype(float)

    def jumps(self, t0: float, t1: float) -> np.ndarray:
        """Jump times in the open interval ``(t0, t1)``."""
        if self.kind is not SignalKind.SQUARE_SGN_SINE or self.amplitude == 0 or self.omega == 0:
            return np.zeros(0)
        w = abs(self.omega)
        half = math.pi / w
        k0 = math.floor(t0 / half) + 1
        k1 = math.ceil(t1 / half) - 1
        if k1 < k0:
            return np.zeros(0)
        return half * np.arange(k0, k1 + 1, dtype=float)


def _as_signals(f, m: int) -> list[SignalSpec]:
    if isinstance(f, SignalSpec):
        f = [f]
    sigs = list(f)
    if len(sigs) != m:
        raise DimensionError(f"{len(sigs)} disturbance channels given, system has {m}")
    return sigs


def disturbance_values(signals: Sequence[SignalSpec], t) -> np.ndarray:
    """Stacked channel values, shape ``t.shape + (m,)``."""
    t = np.asarray(t, dtype=float)
    if not signals:
        return np.zeros(t.shape + (0,))
    return np.stack([s(t) for s in signals], axis=-1)


def audit_admissible(values: np.ndarray, G) -> float:
    """Largest ``f^T G f`` over the samples; raises if it exceeds ``1 + tol``."""
    G = as_symmetric(G, "G") if np.size(G) else np.zeros((0, 0))
    if values.shape[-1] == 0:
        return 0.0
    q = np.einsum("...i,ij,...j->...", values, G, values)
    worst = float(np.max(q))
    if worst > 1.0 + ADMISSIBILITY_TOL:
        raise InvalidInputError(f"disturbance violates its bound: max f^T G f = {worst:.6g} > 1")
    return worst


@dataclass
class SimulationTrace:
    times: np.ndarray
    states: np.ndarray
    disturbances: np.ndarray
    V: np.ndarray | None = None
    entry_time: float | None = None
    backend: str = ""
    max_admissibility: float | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def _stage_forcing(signals, N, t0, h, lo, hi):
    """``N f`` at the three stage times of steps starting at ``t0`` with length ``h``."""
    t0 = np.asarray(t0, dtype=float)
    stages = np.stack([t0, t0 + 0.5 * h, t0 + h], axis=-1)
    if not signals:
        return np.zeros(stages.shape + (N.shape[0],)), np.zeros(stages.shape + (0,))
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    vals = np.stack([s.on_interval(stages, lo, hi) for s in signals], axis=-1)
    return vals @ N.T, vals


def simulate(M, N, f, s0, dt: float = 1e-3, T: float = 100.0, G=None, K=None, P=None,
             backend: str | None = None, blowup: float = 1e150) -> SimulationTrace:
    """Integrate ``s' = M s + N f`` from ``s0`` over ``[0, T]`` with step ``dt``.

    Parameters
    ----------
    f : SignalSpec or sequence of SignalSpec
        One signal per column of ``N``.
    G : array, optional
        Disturbance bound; when given every sample (nodes and stage times)
        is audited for ``f^T G f <= 1``.
    K, P : arrays, optional
        When given, the membership value ``V = (K s)^T P (K s)`` is attached.

    Raises
    ------
    DivergedError
        If the state blows up; the error carries the last valid time.
    """
    M = as_matrix(M, "M")
    n = M.shape[0]
    if M.shape != (n, n):
        raise DimensionError("M must be square")
    N = np.asarray(N, dtype=float).reshape(n, -1)
    signals = _as_signals(f, N.shape[1])
    s0 = np.asarray(s0, dtype=float).ravel()
    if s0.shape != (n,):
        raise DimensionError(f"initial state has {s0.size} entries, expected {n}")
    if not (dt > 0 and math.isfinite(dt)) or not (T >= dt):
        raise InvalidInputError("need dt > 0 and T >= dt")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1.0):
        raise InvalidInputError("T must be an integer multiple of dt")
    times = dt * np.arange(nsteps + 1)

    jumps = np.unique(np.concatenate([s.jumps(0.0, T) for s in signals] or [np.zeros(0)]))
    # a jump within a tiny distance of a node does not split the step
    split_steps: dict[int, list[float]] = {}
    for tb in jumps:
        i = int(math.floor(tb / dt))
        if tb - times[i] > 1e-12 * dt and times[min(i + 1, nsteps)] - tb > 1e-12 * dt and i < nsteps:
            split_steps.setdefault(i, []).append(float(tb))

    starts = times[:-1]
    forcing, vals = _stage_forcing(signals, N, starts, dt, starts, starts + dt)
    node_vals = disturbance_values(signals, times)
    worst = None
    if G is not None:
        worst = max(audit_admissible(vals, G), audit_admissible(node_vals, G))

    states = np.empty((nsteps + 1, n))
    states[0] = s0
    used = backend or kernels.BACKEND
    pos = 0
    cur = s0
    boundaries = sorted(split_steps) + [nsteps]
    for b in boundaries:
        if b > pos:
            seg, done = rk4_lti(M, forcing[pos:b], cur, dt, blowup, used)
            states[pos:pos + done + 1] = seg
            if done < b - pos:
                raise DivergedError(f"state diverged after t = {times[pos + done]:.6g}",
                                    last_time=float(times[pos + done]))
            cur = seg[-1]
            pos = b
        if b == nsteps:
            break
        # split step: sub-steps between the node and the jumps
        edges = [times[b]] + split_steps[b] + [times[b + 1]]
        s = cur
        for lo, hi in zip(edges[:-1], edges[1:]):
            g, v = _stage_forcing(signals, N, np.array([lo]), hi - lo, np.array([lo]), np.array([hi]))
            if G is not None:
                worst = max(worst, audit_admissible(v, G))
            seg, done = rk4_lti(M, g, s, hi - lo, blowup, used)
            if done < 1:
                raise DivergedError(f"state diverged after t = {lo:.6g}", last_time=float(lo))
            s = seg[-1]
        states[b + 1] = s
        cur = s
        pos = b + 1

    trace = SimulationTrace(times, states, node_vals, backend=used, max_admissibility=worst)
    if K is not None and P is not None:
        mem = membership_series(trace, K, P)
        trace.V, trace.entry_time = mem.V, mem.entry_time
    return trace


@dataclass(frozen=True)
class Membership:
    V: np.ndarray
    entry_time: float | None
    entry_index: int | None
    max_after_entry: float
    tail_max: float

    @property
    def violation(self) -> bool:
        """Whether ``V`` left the cylinder (beyond the tolerance) after entering."""
        return self.entry_index is not None and self.max_after_entry > 1.0 + INVARIANCE_TOL

    @property
    def attracted(self) -> bool:
        return self.tail_max <= 1.0 + 1e-3


def membership_series(trace: SimulationTrace, K, P) -> Membership:
    """``V(t) = (K s)^T P (K s)`` with entry time and invariance statistics."""
    K = as_matrix(K, "K")
    P = as_symmetric(P, "P")
    if K.shape[1] != trace.states.shape[1] or P.shape != (K.shape[0], K.shape[0]):
        raise DimensionError("K and P do not match the trace")
    Z = trace.states @ K.T
    V = np.einsum("ti,ij,tj->t", Z, P, Z)
    inside = np.flatnonzero(V <= 1.0)
    if inside.size:
        i0 = int(inside[0])
        after = float(np.max(V[i0:]))
        entry = float(trace.times[i0])
    else:
        i0, after, entry = None, math.inf, None
    tail_start = int(math.floor((1.0 - TAIL_FRACTION) * (V.size - 1)))
    return Membership(V, entry, i0, after, float(np.max(V[tail_start:])))


@dataclass(frozen=True)
class ProjectionData:
    points: np.ndarray
    shape: ProjectionShape
    boundary: list = field(default_factory=list)


def projection_series(trace: SimulationTrace, cylinder: Cylinder, axes, n_boundary: int = 256,
                      extent: float | None = None) -> ProjectionData:
    """Trajectory projected on the coordinate plane ``axes`` with the projected cylinder."""
    i, j = (int(a) for a in axes)
    shape = project_to_plane(cylinder, (i, j))
    pts = trace.states[:, [i, j]]
    if extent is None and shape.kind is ShapeKind.STRIP:
        extent = float(np.max(np.abs(pts))) * 1.5 + 1.0
    return ProjectionData(pts, shape, shape.boundary(n_boundary, extent))


@dataclass(frozen=True)
class Corridor:
    """Per-row bands of the target ``z = K s`` implied by ``z^T P z <= 1``.

    ``half_width[i] = sqrt((P^-1)_ii)``.  For a row of the form
    ``e_p - e_q`` the band is drawn around state ``q`` (``pairs[i] = (p, q)``)
    and ``lower``/``upper`` hold ``s_q -/+ half_width``; otherwise the band is
    around zero and ``lower``/``upper`` bound ``z_i`` itself.
    """

    half_width: np.ndarray
    z: np.ndarray
    pairs: list
    lower: np.ndarray
    upper: np.ndarray
    tracked: np.ndarray


def _difference_pair(row: np.ndarray):
    nz = np.flatnonzero(np.abs(row) > 1e-12)
    if nz.size == 2 and np.isclose(row[nz].sum(), 0.0) and np.isclose(abs(row[nz[0]]), 1.0):
        p, q = (nz[0], nz[1]) if row[nz[0]] > 0 else (nz[1], nz[0])
        return int(p), int(q)
    return None


def corridor_bands(trace: SimulationTrace, K, P) -> Corridor:
    K = as_matrix(K, "K")
    P = as_symmetric(P, "P")
    h = np.sqrt(np.diag(np.linalg.inv(P)))
    z = trace.states @ K.T
    pairs = [_difference_pair(r) for r in K]
    lower = np.empty_like(z)
    upper = np.empty_like(z)
    tracked = np.empty_like(z)
    for i, pq in enumerate(pairs):
        if pq is None:
            lower[:, i], upper[:, i], tracked[:, i] = -h[i], h[i], z[:, i]
        else:
            p, q = pq
            centre = trace.states[:, q]
            lower[:, i], upper[:, i], tracked[:, i] = centre - h[i], centre + h[i], trace.states[:, p]
    return Corridor(h, z, pairs, lower, upper, tracked)
