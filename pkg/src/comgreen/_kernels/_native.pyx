# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Crank-Nicolson sweep: fused band multiply + Thomas solve.

The Cayley matrices (I +- T) coming out of the unitary sub-steps are
diagonally dominant, so the unpivoted Thomas recurrence is stable here.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def cn_sweep(cnp.complex128_t[:, ::1] sub,
             cnp.complex128_t[:, ::1] diag,
             cnp.complex128_t[:, ::1] sup,
             cnp.complex128_t[:, ::1] psi):
    """(I + T)^-1 (I - T) psi for a batch of tridiagonal T; see _fallback."""
    cdef Py_ssize_t B = psi.shape[0]
    cdef Py_ssize_t N = psi.shape[1]
    out_arr = np.empty((B, N), dtype=np.complex128)
    work_arr = np.empty(N, dtype=np.complex128)
    cdef cnp.complex128_t[:, ::1] out = out_arr
    cdef cnp.complex128_t[::1] cp = work_arr
    cdef Py_ssize_t b, j
    cdef double complex rhs_prev, rhs_j, denom, m

    for b in range(B):
        # rhs = (I - T) psi, then forward elimination of (I + T), fused.
        rhs_prev = (1.0 - diag[b, 0]) * psi[b, 0] - sup[b, 0] * psi[b, 1]
        denom = 1.0 + diag[b, 0]
        if denom == 0:
            raise ZeroDivisionError("singular pivot in tridiagonal solve")
        cp[0] = sup[b, 0] / denom
        out[b, 0] = rhs_prev / denom
        for j in range(1, N):
            rhs_j = (1.0 - diag[b, j]) * psi[b, j] - sub[b, j] * psi[b, j - 1]
            if j + 1 < N:
                rhs_j = rhs_j - sup[b, j] * psi[b, j + 1]
            m = sub[b, j]
            denom = (1.0 + diag[b, j]) - m * cp[j - 1]
            if denom == 0:
                raise ZeroDivisionError("singular pivot in tridiagonal solve")
            if j + 1 < N:
                cp[j] = sup[b, j] / denom
            out[b, j] = (rhs_j - m * out[b, j - 1]) / denom
        for j in range(N - 2, -1, -1):
            out[b, j] = out[b, j] - cp[j] * out[b, j + 1]
    return out_arr
