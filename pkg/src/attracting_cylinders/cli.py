"""Command-line front end.

Exit codes: 0 success, 1 unexpected error, 2 structural failure (output
regularity or decoupling condition), 3 numeric failure (infeasible,
unverified or diverged), 4 bad input (parse or validation error).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DisturbedSystem, check_output_regularity, find_attracting_cylinder, certificate_block
from .cylinder import Cylinder, ShapeKind, image, project_to_plane
from .errors import (
    CylinderError,
    DimensionError,
    DivergedError,
    InfeasibleError,
    InvalidInputError,
    NotPSDError,
    NotRealizableError,
    RankError,
    StructuralError,
)
from .lmi import SolverOptions
from .problem_io import (
    AnalysisSpec,
    ControllerFile,
    ProblemParseError,
    TrackingSpec,
    dump_controller,
    load_controller,
    load_problem,
    parse_matrix,
)
from .simulation import corridor_bands, membership_series, projection_series, simulate
from .synthesis import CclOptions, closed_loop, synthesize

EXIT_OK, EXIT_ERROR, EXIT_STRUCTURAL, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2, 3, 4

#: Norm below which controller blocks count as zero in the structure notes.
STATIC_TOL = 1e-6


class CommandFailed(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return f"(empty {M.shape[0]}x{M.shape[1]})"
    return np.array2string(M, formatter={"float_kind": lambda x: f"{x: .15g}"}, max_line_width=160)


def _out(line: str = ""):
    print(line)


def _solver_options(args) -> SolverOptions:
    return SolverOptions(
        max_iter=args.solver_max_iter,
        abstol=args.abstol,
        reltol=args.reltol,
        feastol=args.feastol,
        psd_tol=args.psd_tol,
    )


def _alpha_grid(args, spec):
    if args.paper_mode:
        if spec.options.preset_alpha is None:
            raise CommandFailed("--paper-mode needs options.preset_alpha in the problem file", EXIT_INPUT)
        return [spec.options.preset_alpha]
    if args.alpha_grid:
        if any(a <= 0 for a in args.alpha_grid):
            raise CommandFailed("alpha values must be positive", EXIT_INPUT)
        return list(args.alpha_grid)
    return spec.options.alpha_grid


def _ccl_options(args, spec: TrackingSpec) -> CclOptions:
    o = spec.options
    return CclOptions(
        stop_tol=args.stop_tol if args.stop_tol is not None else o.stop_tol,
        max_iter=args.max_iter if args.max_iter is not None else o.max_iter,
        margin=args.ccl_margin if args.ccl_margin is not None else o.ccl_margin,
        y_margin=args.gain_margin if args.gain_margin is not None else o.gain_margin,
        early_exit=not args.no_early_exit,
        solver=_solver_options(args),
    )


def _load_problem(path):
    return load_problem(path)


def _system_for(spec, ctrl_file: ControllerFile | None):
    """``(DisturbedSystem, C)`` for an analysis problem or a closed tracking loop."""
    if isinstance(spec, AnalysisSpec):
        return spec.system, spec.C
    if ctrl_file is None or ctrl_file.controller is None:
        raise CommandFailed("a tracking problem needs --controller with controller blocks", EXIT_INPUT)
    loop = closed_loop(spec.problem, ctrl_file.controller)
    return DisturbedSystem(loop.M, loop.N, spec.problem.G), spec.problem.K


# -- analyze -------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    spec = _load_problem(args.problem)
    ctrl = load_controller(args.controller) if args.controller else None
    sys_, C = _system_for(spec, ctrl)
    if args.C is not None:
        C = parse_matrix(args.C, "--C")
    reg = check_output_regularity(C, sys_.A)
    _out(f"output regularity: {'ok' if reg else 'FAILED'} (rank {reg.rank}/{C.shape[0]}, residual {reg.residual:.3e})")
    if not reg:
        raise CommandFailed("output map is not regular; the target dynamics do not close", EXIT_STRUCTURAL)
    grid = _alpha_grid(args, spec)
    refine = spec.options.refine and not args.no_refine and not args.paper_mode
    res = find_attracting_cylinder(sys_, C, grid, refine=refine, options=_solver_options(args))
    _out(f"alpha: {res.alpha:.15g}")
    _out(f"cylinder rank k = {res.cylinder.k} in dimension n = {res.cylinder.n}"
         f"{' (ellipsoid)' if res.cylinder.is_ellipsoid else ''}")
    _out("P =")
    _out(_fmt(res.P))
    _out(f"LMI margin (max eigenvalue): {res.lmi_margin:.6e}")
    _out(f"bound 1/lambda_min(P): {res.bound:.15g}")
    _out(f"per-output bounds |y_i| <= {_fmt(res.output_bounds)}")
    if args.verbose:
        _out("alpha table:")
        for row in res.per_alpha:
            _out(f"  {row['alpha']:12.6g}  {'feasible' if row['feasible'] else 'infeasible':10s}  logdet {row['logdet']:.6g}")
    if args.output:
        Path(args.output).write_text(dump_controller(ControllerFile(None, res.P, res.alpha, res.lmi_margin)))
        _out(f"certificate written to {args.output}")
    return EXIT_OK if res.lmi_margin < 0 else EXIT_NUMERIC


# -- synthesize ------------------------------------------------------------------------


def _structure_notes(spec: TrackingSpec, ctrl) -> list[str]:
    notes = []
    dyn = [np.linalg.norm(m) if m.size else 0.0 for m in (ctrl.A3, ctrl.B3, ctrl.C3, ctrl.D3)]
    if spec.problem.a3 == 0 or max(dyn) < STATIC_TOL:
        notes.append("controller is effectively static: u = E3 y + F3 g")
    p = spec.problem.plant
    if ctrl.A3.shape == p.A1.shape and ctrl.B3.shape[1] == p.D1.shape[0]:
        luen = np.abs(ctrl.A3 - (p.A1 - ctrl.B3 @ p.D1)).max()
        notes.append(f"observer structure ||A3 - (A1 - B3 D1)||_max = {luen:.3e}")
    return notes


def cmd_synthesize(args) -> int:
    spec = _load_problem(args.problem)
    if not isinstance(spec, TrackingSpec):
        raise CommandFailed("synthesize needs a tracking problem", EXIT_INPUT)
    grid = _alpha_grid(args, spec)
    opts = _ccl_options(args, spec)
    try:
        res = synthesize(spec.problem, grid, opts)
    except InfeasibleError as exc:
        _out(str(exc))
        for rep in exc.details or []:
            _out(f"  alpha {rep.alpha:10.6g}: {rep.status} {rep.message}")
        raise CommandFailed("synthesis failed", EXIT_NUMERIC) from None
    diag = res.diagnostics
    k = spec.problem.k
    _out(f"decoupling condition residual: {diag.condition_residual:.3e}")
    _out("alpha table:")
    for rep in diag.per_alpha:
        tail = f" margin {rep.margin:.3e}" if math.isfinite(rep.margin) else ""
        _out(f"  {rep.alpha:12.6g}  {rep.status:10s} iterations {rep.iterations:3d}"
             f"{' early-exit' if rep.early_exit else ''}{tail}")
    chosen = next(r for r in diag.per_alpha if r.alpha == diag.alpha)
    _out(f"alpha: {diag.alpha:.15g}")
    _out(f"trace history (target 2k = {2 * k}): {[round(h, 6) for h in chosen.history]}")
    _out("P =")
    _out(_fmt(res.closed_loop.P))
    for name in ("A3", "B3", "C3", "D3", "E3", "F3"):
        _out(f"{name} =")
        _out(_fmt(getattr(res.controller, name)))
    _out(f"closed-loop margin: {res.closed_loop.margin:.6e}")
    _out(f"closed-loop regularity residual: {diag.regularity_residual:.3e}")
    for note in _structure_notes(spec, res.controller):
        _out(note)
    out = args.output or f"{Path(args.problem).stem}_controller.yaml"
    Path(out).write_text(dump_controller(ControllerFile(
        res.controller, res.closed_loop.P, diag.alpha, res.closed_loop.margin, chosen.history)))
    _out(f"controller written to {out}")
    return EXIT_OK


# -- simulate --------------------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if not isinstance(x, str) else x for x in r])


def cmd_simulate(args) -> int:
    spec = _load_problem(args.problem)
    if spec.simulation is None:
        raise CommandFailed("problem file has no simulation section", EXIT_INPUT)
    sim = spec.simulation
    ctrl = load_controller(args.controller) if args.controller else None
    if isinstance(spec, AnalysisSpec):
        if ctrl is None:
            grid = _alpha_grid(args, spec)
            res = find_attracting_cylinder(spec.system, spec.C, grid, refine=not args.paper_mode,
                                           options=_solver_options(args))
            P, alpha = res.P, res.alpha
        else:
            P, alpha = ctrl.P, ctrl.alpha
        M, N, K, G = spec.system.A, spec.system.B, spec.C, spec.system.G
    else:
        if ctrl is None:
            res = synthesize(spec.problem, _alpha_grid(args, spec), _ccl_options(args, spec))
            controller, P, alpha = res.controller, res.closed_loop.P, res.diagnostics.alpha
        else:
            if ctrl.controller is None:
                raise CommandFailed("controller file has no controller blocks", EXIT_INPUT)
            controller, P, alpha = ctrl.controller, ctrl.P, ctrl.alpha
        loop = closed_loop(spec.problem, controller)
        M, N, K, G = loop.M, loop.N, spec.problem.K, spec.problem.G
    if P.shape != (K.shape[0], K.shape[0]):
        raise CommandFailed(f"P is {P.shape[0]}x{P.shape[1]} but the target has {K.shape[0]} rows", EXIT_INPUT)
    dt = args.dt if args.dt is not None else sim.dt
    T = args.T if args.T is not None else sim.T
    trace = simulate(M, N, sim.signals, sim.s0, dt, T, G=G, K=K, P=P)
    mem = membership_series(trace, K, P)
    cyl = Cylinder(K.T @ P @ K)
    axes = tuple(args.axes) if args.axes else _default_axes(K)
    proj = projection_series(trace, cyl, axes)
    band = corridor_bands(trace, K, P)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n, m = trace.states.shape[1], trace.disturbances.shape[1]
    _write_csv(out_dir / "trace.csv",
               ["t"] + [f"s{i}" for i in range(n)] + [f"f{j}" for j in range(m)] + ["V"],
               (np.concatenate([[t], s, f, [v]]) for t, s, f, v in
                zip(trace.times, trace.states, trace.disturbances, mem.V)))
    proj_rows = [["trajectory", *p] for p in proj.points]
    for b, curve in enumerate(proj.boundary):
        proj_rows += [[f"boundary{b}", *p] for p in curve]
    _write_csv(out_dir / "projection.csv", ["series", f"s{axes[0]}", f"s{axes[1]}"], proj_rows)
    k = K.shape[0]
    header = ["t"]
    for i in range(k):
        header += [f"z{i}", f"tracked{i}", f"lower{i}", f"upper{i}"]
    cols = [trace.times]
    for i in range(k):
        cols += [band.z[:, i], band.tracked[:, i], band.lower[:, i], band.upper[:, i]]
    _write_csv(out_dir / "corridor.csv", header, np.column_stack(cols))

    _out(f"alpha: {alpha:.15g}; backend: {trace.backend}; steps: {trace.times.size - 1}")
    _out(f"entry time: {mem.entry_time if mem.entry_time is not None else 'never'}")
    _out(f"max V after entry: {mem.max_after_entry:.9g}; tail max V: {mem.tail_max:.9g}")
    _out(f"projection on axes {axes}: {proj.shape.kind.name}")
    if proj.shape.kind is ShapeKind.STRIP:
        v, h = proj.shape.strip_parameters()
        _out(f"  strip |v^T p| <= {h:.9g} with v = {_fmt(v)}")
    _out(f"corridor half-widths: {_fmt(band.half_width)}")
    _out(f"wrote trace.csv, projection.csv, corridor.csv to {out_dir}")
    if mem.entry_time is None or mem.violation:
        raise CommandFailed("trajectory did not stay in the cylinder", EXIT_NUMERIC)
    return EXIT_OK


def _default_axes(K) -> tuple[int, int]:
    row = K[0]
    nz = np.flatnonzero(np.abs(row) > 1e-12)
    if nz.size >= 2:
        return int(nz[0]), int(nz[1])
    n = K.shape[1]
    return (0, 1) if n >= 2 else (0, 0)


# -- geometry --------------------------------------------------------------------------


def cmd_geometry(args) -> int:
    Q = parse_matrix(args.Q, "--Q")
    cyl = Cylinder(Q)
    if args.action == "image":
        C = parse_matrix(args.C, "--C")
        img = image(cyl, C)
        _out(f"image: ({img.k}, {img.n})-cylinder")
        _out("R =")
        _out(_fmt(img.Q))
        return EXIT_OK
    shape = project_to_plane(cyl, tuple(args.axes))
    _out(f"projection on axes {tuple(args.axes)}: {shape.kind.name}")
    _out("form =")
    _out(_fmt(shape.form))
    if shape.kind is ShapeKind.STRIP:
        v, h = shape.strip_parameters()
        _out(f"strip |v^T p| <= {h:.15g} with v = {_fmt(v)}")
    if args.output:
        rows = []
        for b, curve in enumerate(shape.boundary(args.points, args.extent)):
            rows += [[f"boundary{b}", *p] for p in curve]
        _write_csv(Path(args.output), ["series", "u", "v"], rows)
        _out(f"boundary written to {args.output}")
    return EXIT_OK


# -- verify ----------------------------------------------------------------------------


def cmd_verify(args) -> int:
    spec = _load_problem(args.problem)
    ctrl = load_controller(args.controller)
    sys_, C = _system_for(spec, ctrl)
    if ctrl.P.shape != (C.shape[0], C.shape[0]):
        raise CommandFailed(f"P must be {C.shape[0]}x{C.shape[0]}", EXIT_INPUT)
    eig = np.linalg.eigvalsh(0.5 * (ctrl.P + ctrl.P.T))
    reg = check_output_regularity(C, sys_.A, tol=args.soft_tol if args.soft_tol else 1e-7)
    blk = certificate_block(sys_, C, ctrl.P, ctrl.alpha)
    lam = float(np.linalg.eigvalsh(blk)[-1])
    nrm = float(np.linalg.norm(blk, 2))
    _out(f"alpha: {ctrl.alpha:.15g}")
    _out(f"P eigenvalues: {_fmt(eig)}")
    _out(f"output regularity residual: {reg.residual:.3e}")
    _out(f"block max eigenvalue: {lam:.6e}; block norm: {nrm:.6e}; ratio {lam / nrm:.3e}")
    if isinstance(spec, TrackingSpec) and ctrl.controller is not None:
        for note in _structure_notes(spec, ctrl.controller):
            _out(note)
    if eig[0] <= 0:
        raise CommandFailed("P is not positive definite", EXIT_NUMERIC)
    if not reg:
        raise CommandFailed("target dynamics do not close for this controller", EXIT_STRUCTURAL)
    ok = lam <= args.soft_tol * nrm if args.soft_tol else lam < 0
    _out("verified" if ok else "NOT verified")
    return EXIT_OK if ok else EXIT_NUMERIC


# -- parser ----------------------------------------------------------------------------


def _add_solver_flags(p: argparse.ArgumentParser):
    d = SolverOptions()
    g = p.add_argument_group("LMI solver")
    g.add_argument("--abstol", type=float, default=d.abstol)
    g.add_argument("--reltol", type=float, default=d.reltol)
    g.add_argument("--feastol", type=float, default=d.feastol)
    g.add_argument("--psd-tol", type=float, default=d.psd_tol, help="tolerance of the eigenvalue re-check")
    g.add_argument("--solver-max-iter", type=int, default=d.max_iter)


def _add_alpha_flags(p: argparse.ArgumentParser):
    p.add_argument("--alpha-grid", type=float, nargs="+", metavar="ALPHA",
                   help="decay rates to try (default: file options or a log-spaced grid)")
    p.add_argument("--paper-mode", action="store_true",
                   help="pin alpha to options.preset_alpha and skip the alpha refinement")


def _add_ccl_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("cone complementarity")
    g.add_argument("--stop-tol", type=float, help="stop when the trace is within this factor of 2k")
    g.add_argument("--max-iter", type=int, help="iteration cap")
    g.add_argument("--ccl-margin", type=float, help="strictness of the Lyapunov inequalities")
    g.add_argument("--gain-margin", type=float, help="strictness of the gain LMI")
    g.add_argument("--no-early-exit", action="store_true", help="run to the trace criterion")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="attracting-cylinders", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="attracting cylinder of a system or a closed loop")
    p.add_argument("problem")
    p.add_argument("--controller", help="controller file (tracking problems)")
    p.add_argument("--C", help="output map as a YAML matrix, overriding the file")
    p.add_argument("--no-refine", action="store_true", help="skip the alpha refinement")
    p.add_argument("-o", "--output", help="write P and alpha as a certificate file")
    p.add_argument("-v", "--verbose", action="store_true")
    _add_alpha_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="design a controller for a tracking problem")
    p.add_argument("problem")
    p.add_argument("-o", "--output", help="controller file (default: <problem>_controller.yaml)")
    _add_alpha_flags(p)
    _add_ccl_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="simulate and write trace, projection and corridor CSV")
    p.add_argument("problem")
    p.add_argument("--controller", help="controller or certificate file (default: design on the fly)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--axes", type=int, nargs=2, metavar=("I", "J"), help="0-based projection axes")
    p.add_argument("--dt", type=float)
    p.add_argument("--T", type=float)
    _add_alpha_flags(p)
    _add_ccl_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("geometry", help="images and plane projections of cylinders")
    gsub = p.add_subparsers(dest="action", required=True)
    g = gsub.add_parser("image", help="image under a full-row-rank map")
    g.add_argument("--Q", required=True)
    g.add_argument("--C", required=True)
    g.set_defaults(func=cmd_geometry)
    g = gsub.add_parser("project", help="projection on a coordinate plane")
    g.add_argument("--Q", required=True)
    g.add_argument("--axes", type=int, nargs=2, required=True, metavar=("I", "J"))
    g.add_argument("--points", type=int, default=256)
    g.add_argument("--extent", type=float)
    g.add_argument("-o", "--output", help="write boundary points as CSV")
    g.set_defaults(func=cmd_geometry)

    p = sub.add_parser("verify", help="check a given certificate (and controller) a posteriori")
    p.add_argument("problem")
    p.add_argument("--controller", required=True)
    p.add_argument("--soft-tol", type=float, default=0.0,
                   help="accept max eigenvalue <= tol * block norm (for rounded data)")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ProblemParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StructuralError as exc:
        print(f"structural failure: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL
    except (InfeasibleError, DivergedError, NotRealizableError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, DimensionError, RankError, NotPSDError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CylinderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
