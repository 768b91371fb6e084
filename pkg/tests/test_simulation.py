import numpy as np
import pytest

from attracting_cylinders import kernels
from attracting_cylinders.cylinder import ShapeKind
from attracting_cylinders.errors import DimensionError, DivergedError, InvalidInputError
from attracting_cylinders.simulation import (
    SignalKind,
    SignalSpec,
    audit_admissible,
    corridor_bands,
    disturbance_values,
    membership_series,
    projection_series,
    simulate,
)


def test_signal_values():
    t = np.array([0.0, np.pi / 2, np.pi, 3 * np.pi / 2])
    assert np.allclose(SignalSpec.sine(2.0, 1.0)(t), [0, 2, 0, -2], atol=1e-12)
    sq = SignalSpec.square(0.5, 0.5, 1.0)
    assert np.allclose(sq([0.0, 1.0, 4.0, 7.0]), [0.5, 1.0, 0.0, 1.0])
    assert np.allclose(SignalSpec.constant(0.3)(t), 0.3)
    samp = SignalSpec.sampled([0.0, 1.0], [0.0, 2.0])
    assert np.allclose(samp([-1.0, 0.5, 5.0]), [0.0, 1.0, 2.0])
    assert SignalSpec("sine").kind is SignalKind.SINE


def test_square_wave_jumps_and_one_sided_values():
    sq = SignalSpec.square(0.0, 1.0, 0.1)
    jumps = sq.jumps(0.0, 100.0)
    assert np.allclose(jumps, np.pi / 0.1 * np.arange(1, 4))
    assert sq.jumps(0.0, np.pi / 0.1).size == 0
    t0 = jumps[0]
    assert sq.on_interval(t0, t0 - 1.0, t0) == 1.0
    assert sq.on_interval(t0, t0, t0 + 1.0) == -1.0
    assert SignalSpec.sine().jumps(0, 100).size == 0


def test_signal_validation():
    with pytest.raises(InvalidInputError):
        SignalSpec.sine(float("nan"))
    with pytest.raises(InvalidInputError):
        SignalSpec.sampled([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        SignalSpec.sampled([0.0, 1.0], [1.0])


def test_admissibility_audit():
    vals = disturbance_values([SignalSpec.sine(1.0), SignalSpec.constant(0.0)], np.linspace(0, 10, 101))
    assert vals.shape == (101, 2)
    assert audit_admissible(vals, np.eye(2)) <= 1.0 + 1e-9
    with pytest.raises(InvalidInputError):
        audit_admissible(vals, 4 * np.eye(2))
    with pytest.raises(InvalidInputError):
        simulate(-np.eye(1), np.ones((1, 1)), [SignalSpec.constant(2.0)], [0.0], T=1.0, G=np.eye(1))


def test_scalar_system_matches_closed_form():
    # x' = -x + 1 from x(0) = 0 has x(t) = 1 - exp(-t)
    tr = simulate([[-1.0]], [[1.0]], [SignalSpec.constant(1.0)], [0.0], dt=1e-2, T=5.0)
    assert np.allclose(tr.states[:, 0], 1.0 - np.exp(-tr.times), atol=1e-9)
    tr = simulate([[0.0]], [[1.0]], [SignalSpec.sine(1.0, 2.0)], [0.0], dt=1e-2, T=3.0)
    assert np.allclose(tr.states[:, 0], (1.0 - np.cos(2.0 * tr.times)) / 2.0, atol=1e-9)


def test_square_wave_integrated_exactly_across_jumps():
    # x' = sgn(sin t): a triangle wave; the jump at pi falls inside a step
    tr = simulate([[0.0]], [[1.0]], [SignalSpec.square(0.0, 1.0, 1.0)], [0.0], dt=0.1, T=6.0)
    expected = np.where(tr.times <= np.pi, tr.times, 2 * np.pi - tr.times)
    assert np.allclose(tr.states[:, 0], expected, atol=1e-12)


@pytest.mark.skipif("cython" not in kernels.AVAILABLE, reason="compiled kernel not built")
def test_backends_agree(tracking_design, tracking):
    loop = tracking_design.closed_loop
    sim = tracking.simulation
    a = simulate(loop.M, loop.N, sim.signals, sim.s0, 1e-3, 10.0, backend="cython")
    b = simulate(loop.M, loop.N, sim.signals, sim.s0, 1e-3, 10.0, backend="python")
    assert a.backend == "cython" and b.backend == "python"
    assert np.allclose(a.states, b.states, rtol=0, atol=1e-12)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        simulate([[-1.0]], [[1.0]], [SignalSpec.constant(1.0)], [0.0], T=1.0, backend="fortran")


def _designs(tracking, observer, tracking_design, observer_design):
    return [
        (tracking, tracking_design, [SignalSpec.sine(1.0, 0.4), SignalSpec.square(0.0, 1.0, 0.2),
                                     SignalSpec.constant(-1.0)]),
        (observer, observer_design, [SignalSpec.square(0.5, 0.5, 0.1), SignalSpec.sine(1.0, 1.3),
                                     SignalSpec.constant(1.0)]),
    ]


def test_invariance_and_attraction_matrix(tracking, observer, tracking_design, observer_design):
    for spec, design, signals in _designs(tracking, observer, tracking_design, observer_design):
        loop = design.closed_loop
        for sig in signals:
            tr = simulate(loop.M, loop.N, [sig], spec.simulation.s0, 1e-3, 100.0,
                          G=spec.problem.G, K=loop.K, P=loop.P)
            mem = membership_series(tr, loop.K, loop.P)
            assert mem.entry_time is not None, sig
            assert mem.max_after_entry <= 1.0 + 1e-6, sig
            assert mem.tail_max <= 1.0 + 1e-3, sig
            assert tr.max_admissibility <= 1.0 + 1e-9
            assert np.array_equal(tr.V, mem.V) and tr.entry_time == mem.entry_time


def test_step_halving(tracking, observer, tracking_design, observer_design):
    for spec, design in ((tracking, tracking_design), (observer, observer_design)):
        loop, sim = design.closed_loop, spec.simulation
        a = simulate(loop.M, loop.N, sim.signals, sim.s0, 1e-3, 100.0)
        b = simulate(loop.M, loop.N, sim.signals, sim.s0, 5e-4, 100.0)
        assert np.linalg.norm(a.states[-1] - b.states[-1]) <= 1e-6


def test_divergence_reports_last_time():
    with pytest.raises(DivergedError) as info:
        simulate([[50.0]], [[0.0]], [SignalSpec.constant(0.0)], [1.0], dt=1e-2, T=100.0, blowup=1e100)
    assert 4.0 < info.value.last_time < 5.0


def test_membership_statistics():
    tr = simulate([[-1.0]], [[1.0]], [SignalSpec.constant(0.5)], [3.0], dt=1e-2, T=10.0)
    mem = membership_series(tr, [[1.0]], [[1.0]])
    assert mem.entry_time == pytest.approx(np.log(2.5 / 0.5), abs=2e-2)
    assert mem.attracted and not mem.violation
    never = membership_series(tr, [[1.0]], [[100.0]])
    assert never.entry_time is None and not never.violation and not never.attracted
    with pytest.raises(DimensionError):
        membership_series(tr, [[1.0, 0.0]], [[1.0]])


def test_projection_and_corridor(tracking, tracking_design):
    loop, sim = tracking_design.closed_loop, tracking.simulation
    tr = simulate(loop.M, loop.N, sim.signals, sim.s0, 1e-2, 20.0)
    proj = projection_series(tr, loop.cylinder, (0, 2))
    assert proj.shape.kind is ShapeKind.STRIP and len(proj.boundary) == 2
    assert proj.points.shape == (tr.times.size, 2)
    band = corridor_bands(tr, loop.K, loop.P)
    assert band.pairs == [(0, 2), (1, 3)]
    assert np.allclose(band.upper - band.lower, 2 * band.half_width)
    assert np.allclose(band.tracked, tr.states[:, [0, 1]])
    # once the target is inside the cylinder the state stays in its band
    i0 = membership_series(tr, loop.K, loop.P).entry_index
    assert np.all((band.tracked[i0:] >= band.lower[i0:] - 1e-9) & (band.tracked[i0:] <= band.upper[i0:] + 1e-9))


def test_simulate_validation():
    sig = [SignalSpec.constant(0.0)]
    with pytest.raises(DimensionError):
        simulate(np.eye(2), np.ones((2, 1)), sig, [0.0], T=1.0)
    with pytest.raises(DimensionError):
        simulate(np.eye(1), np.ones((1, 1)), sig * 2, [0.0], T=1.0)
    with pytest.raises(InvalidInputError):
        simulate(np.eye(1), np.ones((1, 1)), sig, [0.0], dt=0.3, T=1.0)
    with pytest.raises(InvalidInputError):
        simulate(np.eye(1), np.ones((1, 1)), sig, [0.0], dt=-1.0, T=1.0)
