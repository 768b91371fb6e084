import os
import subprocess
import sys

import numpy as np
import pytest

from attracting_cylinders import kernels


def _probe(env_value):
    env = dict(os.environ, ATTRACTING_CYLINDERS_BACKEND=env_value)
    code = "from attracting_cylinders import kernels; print(kernels.BACKEND)"
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                          text=True, check=True).stdout.strip()


def test_environment_forces_python_backend():
    assert _probe("python") == "python"
    assert _probe("") == kernels.AVAILABLE[0]


def test_unknown_backend_rejected():
    with pytest.raises(ValueError, match="not available"):
        kernels.rk4_lti(np.zeros((1, 1)), np.zeros((1, 3, 1)), np.zeros(1), 0.1, backend="fortran")


@pytest.mark.parametrize("backend", kernels.AVAILABLE)
def test_free_response_matches_matrix_exponential(backend):
    M = np.array([[0.0, 1.0], [-4.0, -0.4]])
    s0 = np.array([1.0, 0.0])
    dt, steps = 1e-3, 5000
    states, done = kernels.rk4_lti(M, np.zeros((steps, 3, 2)), s0, dt, backend=backend)
    assert done == steps
    w, V = np.linalg.eig(M)
    exact = (V @ np.diag(np.exp(w * dt * steps)) @ np.linalg.solve(V, s0)).real
    assert np.allclose(states[-1], exact, atol=1e-10)


@pytest.mark.parametrize("backend", kernels.AVAILABLE)
def test_divergence_stops_early(backend):
    states, done = kernels.rk4_lti(np.array([[50.0]]), np.zeros((10000, 3, 1)), np.ones(1), 0.1,
                                   blowup=1e12, backend=backend)
    assert done < 10000
    assert states.shape == (done + 1, 1)
    assert np.all(np.isfinite(states))
