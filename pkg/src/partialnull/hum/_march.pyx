# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-marching kernel for constant tridiagonal implicit steps.

Each step solves A x_{n+1} = M x_n + rhs_n with A, M tridiagonal. A is
factored once (Thomas algorithm) and the sweeps run without the GIL.
Band convention: lower[i] = A[i, i-1] (lower[0] unused), upper[i] = A[i, i+1]
(upper[N-1] unused).
"""
import numpy as np


def thomas_factor(double[::1] lower, double[::1] diag, double[::1] upper):
    cdef Py_ssize_t n = diag.shape[0], i
    cp_arr = np.empty(n)
    inv_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] inv = inv_arr
    cdef double den
    with nogil:
        den = diag[0]
        inv[0] = 1.0 / den
        cp[0] = upper[0] * inv[0] if n > 1 else 0.0
        for i in range(1, n):
            den = diag[i] - lower[i] * cp[i - 1]
            inv[i] = 1.0 / den
            cp[i] = upper[i] * inv[i] if i < n - 1 else 0.0
    return cp_arr, inv_arr


def march(double[::1] lower, double[::1] cp, double[::1] inv,
          double[::1] ml, double[::1] md, double[::1] mu,
          double[:, ::1] rhs, double[:, ::1] out):
    """out[0] holds x_0 on entry; fills out[1:]. ``rhs`` has 0 rows for a zero source."""
    cdef Py_ssize_t nt = out.shape[0] - 1, n = out.shape[1], k, i
    cdef bint has_rhs = rhs.shape[0] > 0
    cdef double b, prev
    with nogil:
        for k in range(nt):
            # forward elimination of A x = M out[k] + rhs[k], d' stored in out[k+1]
            prev = 0.0
            for i in range(n):
                b = md[i] * out[k, i]
                if i > 0:
                    b = b + ml[i] * out[k, i - 1]
                if i < n - 1:
                    b = b + mu[i] * out[k, i + 1]
                if has_rhs:
                    b = b + rhs[k, i]
                if i > 0:
                    prev = (b - lower[i] * prev) * inv[i]
                else:
                    prev = b * inv[0]
                out[k + 1, i] = prev
            for i in range(n - 2, -1, -1):
                out[k + 1, i] = out[k + 1, i] - cp[i] * out[k + 1, i + 1]
