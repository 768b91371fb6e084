"""Backend selection for the Runge-Kutta integration loop.

The compiled extension is used when it was built; otherwise the numpy
version.  Setting ``ATTRACTING_CYLINDERS_BACKEND=python`` forces the numpy
version at import time.
"""

from __future__ import annotations

import os

import numpy as np

from . import _rk4_py

try:
    from . import _rk4 as _compiled
except ImportError:  # extension not built
    _compiled = None

#: Backends that can be requested explicitly.
AVAILABLE = ("cython", "python") if _compiled is not None else ("python",)

if os.environ.get("ATTRACTING_CYLINDERS_BACKEND", "").lower() == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def rk4_lti(M, forcing, s0, dt: float, blowup: float = 1e150, backend: str | None = None):
    """Fixed-step integration of ``s' = M s + g``.

    Parameters
    ----------
    M : (n, n) array
    forcing : (nsteps, 3, n) array
        ``g`` at the start, midpoint and end of every step.
    s0 : (n,) array
    dt : float
    blowup : float
        Magnitude beyond which the state counts as diverged.
    backend : {"cython", "python"}, optional
        Defaults to the backend selected at import.

    Returns
    -------
    states : (completed + 1, n) array
    completed : int
        Number of steps taken before divergence (``nsteps`` if none).
    """
    name = backend or BACKEND
    if name not in AVAILABLE:
        raise ValueError(f"backend {name!r} is not available (have {AVAILABLE})")
    M = np.ascontiguousarray(M, dtype=float)
    forcing = np.ascontiguousarray(forcing, dtype=float)
    s0 = np.ascontiguousarray(s0, dtype=float)
    out = np.empty((forcing.shape[0] + 1, s0.shape[0]))
    impl = _compiled.rk4_lti if name == "cython" else _rk4_py.rk4_lti
    done = int(impl(M, forcing, s0, float(dt), out, float(blowup)))
    return out[: done + 1], done
