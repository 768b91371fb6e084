"""YAML problem and controller files.

Matrices are row lists (``[[1, 0], [0, 1]]``); a bare number is a 1x1
matrix and ``{zeros: [rows, cols]}`` gives a zero (possibly empty) matrix.
Two problem kinds exist:

``analysis``
    ``system: {A, B, G}``, ``output: {C}``, optional ``simulation`` and
    ``options``.
``tracking`` (the default)
    ``plant: {A1, B1, C1, D1, E1?, F1?}``, optional ``reference:
    {A2, C2, D2}``, ``controller_order``, ``target: {K1, K2?, K3?}``,
    ``bound: {G}``, optional ``simulation`` and ``options``.

``simulation`` holds ``signals`` (one mapping per disturbance channel with
``kind`` in ``sine | square | constant | sampled``), ``s0``, ``dt`` and ``T``.
``options`` holds ``alpha_grid``, ``preset_alpha``, ``stop_tol``,
``max_iter``, ``refine`` and ``margins: {ccl, gain}``.

Output floats are written with ``repr`` so every value round-trips exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .analysis import DisturbedSystem
from .errors import CylinderError
from .simulation import SignalKind, SignalSpec
from .synthesis import ControllerParams, PlantModel, ReferenceModel, SynthesisProblem


class ProblemParseError(CylinderError):
    """Malformed problem or controller file; carries 1-based line/column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


# -- node tree with positions ----------------------------------------------------


class _Doc:
    """A composed YAML node with convenience accessors and error positions."""

    def __init__(self, node: yaml.Node, path: str = ""):
        self.node = node
        self.path = path or "<root>"

    def error(self, message: str) -> ProblemParseError:
        m = self.node.start_mark
        return ProblemParseError(f"{self.path}: {message}", m.line + 1, m.column + 1)

    def is_mapping(self) -> bool:
        return isinstance(self.node, yaml.MappingNode)

    def is_sequence(self) -> bool:
        return isinstance(self.node, yaml.SequenceNode)

    def is_null(self) -> bool:
        return isinstance(self.node, yaml.ScalarNode) and self.node.tag.endswith(":null")

    def keys(self) -> list[str]:
        if not self.is_mapping():
            raise self.error("expected a mapping")
        return [k.value for k, _ in self.node.value]

    def get(self, key: str, required: bool = False) -> "_Doc | None":
        if not self.is_mapping():
            raise self.error("expected a mapping")
        for k, v in self.node.value:
            if k.value == key:
                child = _Doc(v, f"{self.path}.{key}" if self.path != "<root>" else key)
                if child.is_null():
                    if required:
                        raise child.error("required value is empty")
                    return None
                return child
        if required:
            raise self.error(f"missing required key '{key}'")
        return None

    def items(self) -> list["_Doc"]:
        if not self.is_sequence():
            raise self.error("expected a list")
        return [_Doc(v, f"{self.path}[{i}]") for i, v in enumerate(self.node.value)]

    def scalar(self) -> str:
        if not isinstance(self.node, yaml.ScalarNode):
            raise self.error("expected a scalar")
        return self.node.value

    def number(self) -> float:
        text = self.scalar()
        try:
            val = float(text)
        except ValueError:
            raise self.error(f"'{text}' is not a number") from None
        if not math.isfinite(val):
            raise self.error("numbers must be finite")
        return val

    def integer(self) -> int:
        val = self.number()
        if val != int(val):
            raise self.error("expected an integer")
        return int(val)

    def boolean(self) -> bool:
        text = self.scalar().lower()
        if text in ("true", "yes", "on", "1"):
            return True
        if text in ("false", "no", "off", "0"):
            return False
        raise self.error(f"'{text}' is not a boolean")

    def text(self) -> str:
        return self.scalar()

    def vector(self) -> np.ndarray:
        if isinstance(self.node, yaml.ScalarNode):
            return np.array([self.number()])
        return np.array([d.number() for d in self.items()], dtype=float)

    def matrix(self, rows: int | None = None, cols: int | None = None) -> np.ndarray:
        if isinstance(self.node, yaml.ScalarNode):
            M = np.array([[self.number()]])
        elif self.is_mapping():
            z = self.get("zeros", required=True)
            shape = z.items()
            if len(shape) != 2:
                raise z.error("zeros needs [rows, cols]")
            r, c = shape[0].integer(), shape[1].integer()
            if r < 0 or c < 0:
                raise z.error("dimensions must be >= 0")
            M = np.zeros((r, c))
        else:
            rws = self.items()
            if not rws:
                raise self.error("empty matrix must be written as {zeros: [rows, cols]}")
            data = [r.vector() if r.is_sequence() else np.array([r.number()]) for r in rws]
            width = {len(r) for r in data}
            if len(width) != 1:
                raise self.error("rows have different lengths")
            M = np.vstack(data)
        if rows is not None and M.shape[0] != rows:
            raise self.error(f"expected {rows} rows, got {M.shape[0]}")
        if cols is not None and M.shape[1] != cols:
            raise self.error(f"expected {cols} columns, got {M.shape[1]}")
        return M


def _compose(text: str) -> _Doc:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ProblemParseError(f"YAML syntax error: {exc.problem}",
                                mark.line + 1 if mark else None, mark.column + 1 if mark else None) from None
    except yaml.YAMLError as exc:
        raise ProblemParseError(f"YAML error: {exc}") from None
    if node is None:
        raise ProblemParseError("empty document")
    doc = _Doc(node)
    if not doc.is_mapping():
        raise doc.error("top level must be a mapping")
    return doc


def _check_keys(doc: _Doc, allowed: set[str]):
    for key, _ in doc.node.value:
        if key.value not in allowed:
            m = key.start_mark
            raise ProblemParseError(f"{doc.path}: unknown key '{key.value}'", m.line + 1, m.column + 1)


# -- specifications ----------------------------------------------------------------


@dataclass
class SimulationSpec:
    signals: list
    s0: np.ndarray
    dt: float = 1e-3
    T: float = 100.0


@dataclass
class Options:
    alpha_grid: list | None = None
    preset_alpha: float | None = None
    stop_tol: float = 0.05
    max_iter: int = 100
    refine: bool = True
    ccl_margin: float = 1e-3
    gain_margin: float | None = None


@dataclass
class AnalysisSpec:
    system: DisturbedSystem
    C: np.ndarray
    simulation: SimulationSpec | None = None
    options: Options = field(default_factory=Options)
    name: str = ""
    kind: str = "analysis"


@dataclass
class TrackingSpec:
    problem: SynthesisProblem
    simulation: SimulationSpec | None = None
    options: Options = field(default_factory=Options)
    name: str = ""
    kind: str = "tracking"


@dataclass
class ControllerFile:
    """Synthesized (or reference) controller with its certificate."""

    controller: ControllerParams | None
    P: np.ndarray
    alpha: float
    margin: float | None = None
    history: list = field(default_factory=list)


def _signal(doc: _Doc) -> SignalSpec:
    _check_keys(doc, {"kind", "amplitude", "omega", "offset", "value", "times", "values"})
    kind_doc = doc.get("kind", required=True)
    try:
        kind = SignalKind(kind_doc.text())
    except ValueError:
        raise kind_doc.error(f"unknown signal kind '{kind_doc.text()}' "
                             f"(expected one of {[k.value for k in SignalKind]})") from None
    kw: dict[str, Any] = {}
    for name in ("amplitude", "omega", "offset", "value"):
        d = doc.get(name)
        if d is not None:
            kw[name] = d.number()
    if kind is SignalKind.SAMPLED:
        t, v = doc.get("times", required=True), doc.get("values", required=True)
        kw["times"], kw["values"] = tuple(t.vector()), tuple(v.vector())
        if len(kw["times"]) != len(kw["values"]):
            raise doc.error("times and values differ in length")
    try:
        return SignalSpec(kind, **kw)
    except CylinderError as exc:
        raise doc.error(str(exc)) from None


def _simulation(doc: _Doc | None, n: int, m: int) -> SimulationSpec | None:
    if doc is None:
        return None
    _check_keys(doc, {"signals", "s0", "dt", "T"})
    sig_doc = doc.get("signals")
    signals = [_signal(d) for d in sig_doc.items()] if sig_doc is not None else []
    if len(signals) != m:
        raise (sig_doc or doc).error(f"{len(signals)} signals given, the disturbance has {m} channels")
    s0_doc = doc.get("s0", required=True)
    s0 = s0_doc.vector()
    if s0.size != n:
        raise s0_doc.error(f"initial state needs {n} entries, got {s0.size}")
    dt = doc.get("dt").number() if doc.get("dt") is not None else 1e-3
    T = doc.get("T").number() if doc.get("T") is not None else 100.0
    if dt <= 0 or T < dt:
        raise doc.error("need dt > 0 and T >= dt")
    return SimulationSpec(signals, s0, dt, T)


def _options(doc: _Doc | None) -> Options:
    opts = Options()
    if doc is None:
        return opts
    _check_keys(doc, {"alpha_grid", "preset_alpha", "stop_tol", "max_iter", "refine", "margins"})
    g = doc.get("alpha_grid")
    if g is not None:
        grid = [float(a) for a in g.vector()]
        if not grid or any(a <= 0 for a in grid):
            raise g.error("alpha grid must be nonempty and positive")
        opts.alpha_grid = grid
    if doc.get("preset_alpha") is not None:
        opts.preset_alpha = doc.get("preset_alpha").number()
        if opts.preset_alpha <= 0:
            raise doc.get("preset_alpha").error("must be positive")
    if doc.get("stop_tol") is not None:
        opts.stop_tol = doc.get("stop_tol").number()
    if doc.get("max_iter") is not None:
        opts.max_iter = doc.get("max_iter").integer()
    if doc.get("refine") is not None:
        opts.refine = doc.get("refine").boolean()
    mg = doc.get("margins")
    if mg is not None:
        _check_keys(mg, {"ccl", "gain"})
        if mg.get("ccl") is not None:
            opts.ccl_margin = mg.get("ccl").number()
        if mg.get("gain") is not None:
            opts.gain_margin = mg.get("gain").number()
    return opts


def _wrap(doc: _Doc, fn):
    """Run a constructor, turning model validation errors into positioned parse errors."""
    try:
        return fn()
    except ProblemParseError:
        raise
    except (CylinderError, ValueError) as exc:
        raise doc.error(str(exc)) from None


def _parse_analysis(doc: _Doc) -> AnalysisSpec:
    _check_keys(doc, {"kind", "name", "system", "output", "simulation", "options"})
    s = doc.get("system", required=True)
    _check_keys(s, {"A", "B", "G"})
    A = s.get("A", required=True).matrix()
    B = s.get("B", required=True).matrix(rows=A.shape[0])
    G = s.get("G", required=True).matrix(B.shape[1], B.shape[1])
    system = _wrap(s, lambda: DisturbedSystem(A, B, G))
    out = doc.get("output", required=True)
    _check_keys(out, {"C"})
    C = out.get("C", required=True).matrix(cols=A.shape[0])
    sim = _simulation(doc.get("simulation"), A.shape[0], B.shape[1])
    name = doc.get("name").text() if doc.get("name") is not None else ""
    return AnalysisSpec(system, C, sim, _options(doc.get("options")), name)


def _parse_tracking(doc: _Doc) -> TrackingSpec:
    _check_keys(doc, {"kind", "name", "plant", "reference", "controller_order", "target", "bound",
                      "simulation", "options"})
    p = doc.get("plant", required=True)
    _check_keys(p, {"A1", "B1", "C1", "D1", "E1", "F1"})
    A1 = p.get("A1", required=True).matrix()
    a1 = A1.shape[0]
    B1 = p.get("B1", required=True).matrix(rows=a1)
    C1 = p.get("C1", required=True).matrix(rows=a1)
    D1 = p.get("D1", required=True).matrix(cols=a1)
    b1, c1, b2 = B1.shape[1], C1.shape[1], D1.shape[0]
    E1 = p.get("E1").matrix(b2, b1) if p.get("E1") is not None else None
    F1 = p.get("F1").matrix(b2, c1) if p.get("F1") is not None else None
    plant = _wrap(p, lambda: PlantModel(A1, B1, C1, D1, E1, F1))

    r = doc.get("reference")
    if r is None:
        reference = ReferenceModel.empty()
    else:
        _check_keys(r, {"A2", "C2", "D2"})
        A2 = r.get("A2", required=True).matrix()
        a2 = A2.shape[0]
        C2 = r.get("C2").matrix(rows=a2) if r.get("C2") is not None else np.zeros((a2, 0))
        D2 = r.get("D2").matrix(cols=a2) if r.get("D2") is not None else np.zeros((0, a2))
        reference = _wrap(r, lambda: ReferenceModel(A2, C2, D2))
    a2, c2, _ = reference.dims

    order = doc.get("controller_order")
    a3 = order.integer() if order is not None else 0
    if a3 < 0:
        raise order.error("controller order must be >= 0")
    t = doc.get("target", required=True)
    _check_keys(t, {"K1", "K2", "K3"})
    K1 = t.get("K1", required=True).matrix(cols=a1)
    k = K1.shape[0]
    K2 = t.get("K2").matrix(k, a2) if t.get("K2") is not None else np.zeros((k, a2))
    K3 = t.get("K3").matrix(k, a3) if t.get("K3") is not None else np.zeros((k, a3))
    b = doc.get("bound", required=True)
    _check_keys(b, {"G"})
    m = c1 + c2
    G = b.get("G", required=True).matrix(m, m)
    problem = _wrap(doc, lambda: SynthesisProblem(plant, reference, a3, K1, K2, K3, G))
    sim = _simulation(doc.get("simulation"), problem.n, m)
    name = doc.get("name").text() if doc.get("name") is not None else ""
    return TrackingSpec(problem, sim, _options(doc.get("options")), name)


def parse_problem(text: str) -> AnalysisSpec | TrackingSpec:
    doc = _compose(text)
    kind_doc = doc.get("kind")
    kind = kind_doc.text() if kind_doc is not None else "tracking"
    if kind == "analysis":
        return _parse_analysis(doc)
    if kind == "tracking":
        return _parse_tracking(doc)
    raise kind_doc.error(f"unknown problem kind '{kind}' (expected analysis or tracking)")


def load_problem(path) -> AnalysisSpec | TrackingSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_problem(text)


def parse_matrix(text: str, name: str = "matrix") -> np.ndarray:
    """A single matrix written inline, e.g. ``"[[1, 0], [0, 2]]"``."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ProblemParseError(f"{name}: YAML syntax error: {exc.problem}",
                                mark.line + 1 if mark else None, mark.column + 1 if mark else None) from None
    except yaml.YAMLError as exc:
        raise ProblemParseError(f"{name}: not valid YAML ({exc})") from None
    if node is None:
        raise ProblemParseError(f"{name}: empty")
    return _Doc(node, name).matrix()


# -- serialization -----------------------------------------------------------------


class _Flow(list):
    """List emitted in YAML flow style."""


def _flow_representer(dumper, data):
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=True)


def _float_representer(dumper, data):
    return dumper.represent_scalar("tag:yaml.org,2002:float", repr(float(data)))


class _Dumper(yaml.SafeDumper):
    pass


_Dumper.add_representer(_Flow, _flow_representer)
_Dumper.add_representer(float, _float_representer)


def _mat_out(M) -> Any:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return {"zeros": _Flow([int(M.shape[0]), int(M.shape[1])])}
    return [_Flow([float(x) for x in row]) for row in M]


def _signal_out(s: SignalSpec) -> dict:
    out: dict[str, Any] = {"kind": s.kind.value}
    if s.kind is SignalKind.SINE:
        out.update(amplitude=float(s.amplitude), omega=float(s.omega))
    elif s.kind is SignalKind.SQUARE_SGN_SINE:
        out.update(offset=float(s.offset), amplitude=float(s.amplitude), omega=float(s.omega))
    elif s.kind is SignalKind.CONSTANT:
        out.update(value=float(s.value))
    else:
        out.update(times=_Flow([float(x) for x in s.times]), values=_Flow([float(x) for x in s.values]))
    return out


def _options_out(o: Options) -> dict:
    out: dict[str, Any] = {}
    if o.alpha_grid is not None:
        out["alpha_grid"] = _Flow([float(a) for a in o.alpha_grid])
    if o.preset_alpha is not None:
        out["preset_alpha"] = float(o.preset_alpha)
    out["stop_tol"] = float(o.stop_tol)
    out["max_iter"] = int(o.max_iter)
    out["refine"] = bool(o.refine)
    margins: dict[str, Any] = {"ccl": float(o.ccl_margin)}
    if o.gain_margin is not None:
        margins["gain"] = float(o.gain_margin)
    out["margins"] = margins
    return out


def problem_to_dict(spec: AnalysisSpec | TrackingSpec) -> dict:
    out: dict[str, Any] = {"kind": spec.kind}
    if spec.name:
        out["name"] = spec.name
    if isinstance(spec, AnalysisSpec):
        out["system"] = {"A": _mat_out(spec.system.A), "B": _mat_out(spec.system.B), "G": _mat_out(spec.system.G)}
        out["output"] = {"C": _mat_out(spec.C)}
    else:
        pr = spec.problem
        p, r = pr.plant, pr.reference
        out["plant"] = {k: _mat_out(getattr(p, k)) for k in ("A1", "B1", "C1", "D1", "E1", "F1")}
        if r.dims[0] or r.dims[2] or r.dims[1]:
            out["reference"] = {k: _mat_out(getattr(r, k)) for k in ("A2", "C2", "D2")}
        out["controller_order"] = int(pr.a3)
        out["target"] = {"K1": _mat_out(pr.K1), "K2": _mat_out(pr.K2), "K3": _mat_out(pr.K3)}
        out["bound"] = {"G": _mat_out(pr.G)}
    if spec.simulation is not None:
        s = spec.simulation
        out["simulation"] = {
            "signals": [_signal_out(x) for x in s.signals],
            "s0": _Flow([float(x) for x in s.s0]),
            "dt": float(s.dt),
            "T": float(s.T),
        }
    out["options"] = _options_out(spec.options)
    return out


def dump_problem(spec: AnalysisSpec | TrackingSpec) -> str:
    return yaml.dump(problem_to_dict(spec), Dumper=_Dumper, sort_keys=False)


def controller_to_dict(cf: ControllerFile) -> dict:
    out: dict[str, Any] = {"kind": "controller", "alpha": float(cf.alpha), "P": _mat_out(cf.P)}
    if cf.controller is not None:
        c = cf.controller
        out.update({k: _mat_out(getattr(c, k)) for k in ("A3", "B3", "C3", "D3", "E3", "F3")})
    if cf.margin is not None:
        out["margin"] = float(cf.margin)
    if cf.history:
        out["history"] = _Flow([float(h) for h in cf.history])
    return out


def dump_controller(cf: ControllerFile) -> str:
    return yaml.dump(controller_to_dict(cf), Dumper=_Dumper, sort_keys=False)


def parse_controller(text: str) -> ControllerFile:
    doc = _compose(text)
    _check_keys(doc, {"kind", "alpha", "P", "A3", "B3", "C3", "D3", "E3", "F3", "margin", "history"})
    kind = doc.get("kind")
    if kind is not None and kind.text() != "controller":
        raise kind.error("expected kind: controller")
    alpha_doc = doc.get("alpha", required=True)
    alpha = alpha_doc.number()
    if alpha <= 0:
        raise alpha_doc.error("alpha must be positive")
    P = doc.get("P", required=True).matrix()
    if P.shape[0] != P.shape[1]:
        raise doc.get("P").error("P must be square")
    blocks = {k: doc.get(k) for k in ("A3", "B3", "C3", "D3", "E3", "F3")}
    present = [k for k, v in blocks.items() if v is not None]
    ctrl = None
    if present:
        missing = [k for k, v in blocks.items() if v is None]
        if missing:
            raise doc.error(f"controller blocks missing: {', '.join(missing)}")
        mats = {k: v.matrix() for k, v in blocks.items()}
        a3 = mats["A3"].shape[0]
        b1 = mats["D3"].shape[0]
        shapes_ok = (
            mats["A3"].shape == (a3, a3)
            and mats["B3"].shape[0] == a3 and mats["C3"].shape[0] == a3 and mats["D3"].shape[1] == a3
            and mats["E3"].shape == (b1, mats["B3"].shape[1]) and mats["F3"].shape == (b1, mats["C3"].shape[1])
        )
        if not shapes_ok:
            raise doc.error("controller block dimensions are inconsistent")
        ctrl = ControllerParams(**mats)
    margin = doc.get("margin").number() if doc.get("margin") is not None else None
    history = list(doc.get("history").vector()) if doc.get("history") is not None else []
    return ControllerFile(ctrl, P, alpha, margin, history)


def load_controller(path) -> ControllerFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_controller(text)
