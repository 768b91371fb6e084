"""Pure numpy version of the compiled Runge-Kutta loop (same contract)."""

from __future__ import annotations

import numpy as np


def rk4_lti(M: np.ndarray, forcing: np.ndarray, s0: np.ndarray, dt: float,
            out: np.ndarray, blowup: float) -> int:
    """Integrate ``len(forcing)`` steps of ``s' = M s + g``; see the compiled kernel."""
    s = np.array(s0, dtype=float)
    out[0] = s
    h2, h6 = 0.5 * dt, dt / 6.0
    for i in range(forcing.shape[0]):
        g0, gm, g1 = forcing[i]
        k1 = M @ s + g0
        k2 = M @ (s + h2 * k1) + gm
        k3 = M @ (s + h2 * k2) + gm
        k4 = M @ (s + dt * k3) + g1
        s = s + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(s)) or np.max(np.abs(s), initial=0.0) > blowup:
            return i
        out[i + 1] = s
    return forcing.shape[0]
