# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled classical Runge-Kutta loop for ``s' = M s + g(t)``."""

from libc.math cimport fabs, isfinite


def rk4_lti(double[:, ::1] M, double[:, :, ::1] forcing, double[::1] s0, double dt,
            double[:, ::1] out, double blowup):
    """Integrate ``len(forcing)`` steps of size ``dt`` starting from ``s0``.

    ``forcing[i]`` holds ``g`` at the start, midpoint and end of step ``i``.
    Rows ``0 .. completed`` of ``out`` receive the states.  Integration stops
    early when a state component is non-finite or exceeds ``blowup`` in
    magnitude; the return value is the number of completed steps.
    """
    cdef Py_ssize_t n = M.shape[0]
    cdef Py_ssize_t nsteps = forcing.shape[0]
    cdef Py_ssize_t i, r, c
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0
    cdef double acc, v
    cdef double[::1] s = s0.copy()
    cdef double[::1] tmp = s0.copy()
    cdef double[::1] k1 = s0.copy()
    cdef double[::1] k2 = s0.copy()
    cdef double[::1] k3 = s0.copy()
    cdef double[::1] k4 = s0.copy()

    for r in range(n):
        out[0, r] = s[r]
    for i in range(nsteps):
        for r in range(n):
            acc = forcing[i, 0, r]
            for c in range(n):
                acc += M[r, c] * s[c]
            k1[r] = acc
        for r in range(n):
            tmp[r] = s[r] + h2 * k1[r]
        for r in range(n):
            acc = forcing[i, 1, r]
            for c in range(n):
                acc += M[r, c] * tmp[c]
            k2[r] = acc
        for r in range(n):
            tmp[r] = s[r] + h2 * k2[r]
        for r in range(n):
            acc = forcing[i, 1, r]
            for c in range(n):
                acc += M[r, c] * tmp[c]
            k3[r] = acc
        for r in range(n):
            tmp[r] = s[r] + dt * k3[r]
        for r in range(n):
            acc = forcing[i, 2, r]
            for c in range(n):
                acc += M[r, c] * tmp[c]
            k4[r] = acc
        for r in range(n):
            v = s[r] + h6 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
            if not isfinite(v) or fabs(v) > blowup:
                return i
            s[r] = v
            out[i + 1, r] = v
    return nsteps
