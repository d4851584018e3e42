# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled log-domain tridiagonal propagation (same contract as _tridiag_py.propagate_log)."""
import numpy as np
from libc.math cimport log, exp, INFINITY


cdef inline double lse3(double x, double y, double z) nogil:
    cdef double m = x
    if y > m:
        m = y
    if z > m:
        m = z
    if m == -INFINITY:
        return -INFINITY
    return m + log(exp(x - m) + exp(y - m) + exp(z - m))


def propagate_log(logdiag, logupper, loglower, Py_ssize_t steps, bint left):
    cdef double[::1] ld = np.ascontiguousarray(logdiag, dtype=np.float64)
    cdef double[::1] lu = np.ascontiguousarray(logupper, dtype=np.float64)
    cdef double[::1] ll = np.ascontiguousarray(loglower, dtype=np.float64)
    cdef Py_ssize_t D = ld.shape[0]
    out_arr = np.full((steps + 1, D), -np.inf)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] a = lu if left else ll
    cdef double[::1] b = ll if left else lu
    cdef Py_ssize_t t, k
    cdef double x, y, z
    out[0, 0] = 0.0
    with nogil:
        for t in range(1, steps + 1):
            for k in range(D):
                x = ld[k] + out[t - 1, k]
                y = a[k - 1] + out[t - 1, k - 1] if k > 0 else -INFINITY
                z = b[k] + out[t - 1, k + 1] if k < D - 1 else -INFINITY
                out[t, k] = lse3(x, y, z)
    return out_arr
