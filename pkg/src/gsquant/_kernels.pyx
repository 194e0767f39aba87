# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled toric flow kernel; same contract as gsquant._kernels_py.density_terms."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY
from libc.stdlib cimport malloc, free as cfree

cnp.import_array()


cdef double _det(double* a, int n) noexcept nogil:
    cdef int i, j, k, piv
    cdef double det = 1.0, t, best
    for k in range(n):
        piv = k
        best = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > best:
                best = fabs(a[i * n + k])
                piv = i
        if best == 0.0:
            return 0.0
        if piv != k:
            for j in range(n):
                t = a[k * n + j]
                a[k * n + j] = a[piv * n + j]
                a[piv * n + j] = t
            det = -det
        det *= a[k * n + k]
        for i in range(k + 1, n):
            t = a[i * n + k] / a[k * n + k]
            for j in range(k + 1, n):
                a[i * n + j] -= t * a[k * n + j]
    return det


def density_terms(u0, wq, wbasis, offsets, scales, Nmat, free, zero, fac):
    cdef double[:, ::1] U = np.ascontiguousarray(u0, dtype=np.float64)
    cdef double[:, ::1] WQ = np.ascontiguousarray(wq, dtype=np.float64)
    cdef double[:, ::1] WB = np.ascontiguousarray(wbasis, dtype=np.float64)
    cdef long[::1] OFF = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef double[::1] C = np.ascontiguousarray(scales, dtype=np.float64)
    cdef double[:, ::1] NM = np.ascontiguousarray(Nmat, dtype=np.float64).reshape(len(free), -1)
    cdef long[::1] FR = np.ascontiguousarray(free, dtype=np.int64)
    cdef long[::1] ZE = np.ascontiguousarray(zero, dtype=np.int64)
    cdef long[::1] FA = np.ascontiguousarray(fac, dtype=np.int64)
    cdef Py_ssize_t nb = U.shape[0], A = U.shape[1], nq = WQ.shape[0]
    cdef Py_ssize_t F = OFF.shape[0] - 1, d = WB.shape[1], n = FR.shape[0], p = NM.shape[1]
    logS_arr = np.empty((nb, nq, F))
    jac_arr = np.empty((nb, nq))
    cdef double[:, :, ::1] LS = logS_arr
    cdef double[:, ::1] JAC = jac_arr
    cdef double* r = <double*> malloc(A * sizeof(double))
    cdef double* uf = <double*> malloc(A * sizeof(double))
    cdef double* mean = <double*> malloc((F * d + 1) * sizeof(double))
    cdef double* M = <double*> malloc((n * n + 1) * sizeof(double))
    cdef double* Fm = <double*> malloc((n * n + 1) * sizeof(double))
    cdef Py_ssize_t b, q, i, a, j, f, g, lo, hi
    cdef double top, s, e, ls, acc
    try:
        with nogil:
            for b in range(nb):
                for q in range(nq):
                    for i in range(F):
                        lo = OFF[i]
                        hi = OFF[i + 1]
                        top = -INFINITY
                        for a in range(lo, hi):
                            if U[b, a] > 0 and 2.0 * WQ[q, a] > top:
                                top = 2.0 * WQ[q, a]
                        s = 0.0
                        for a in range(lo, hi):
                            if U[b, a] > 0:
                                s += U[b, a] * exp(2.0 * WQ[q, a] - top)
                        ls = top + log(s)
                        LS[b, q, i] = ls
                        for a in range(lo, hi):
                            r[a] = exp(2.0 * WQ[q, a] - ls)
                            uf[a] = U[b, a] * r[a]
                        for j in range(d):
                            acc = 0.0
                            for a in range(lo, hi):
                                acc += uf[a] * WB[a, j]
                            mean[i * d + j] = acc
                    if n == 0:
                        JAC[b, q] = 1.0
                        continue
                    for f in range(n):
                        for j in range(d):
                            M[f * n + j] = 2.0 * C[FA[f]] * uf[FR[f]] * (WB[FR[f], j] - mean[FA[f] * d + j])
                        for g in range(n):
                            if FA[f] != FA[g]:
                                Fm[f * n + g] = 0.0
                            else:
                                Fm[f * n + g] = -uf[FR[f]] * (r[FR[g]] - r[ZE[g]])
                                if f == g:
                                    Fm[f * n + g] += r[FR[f]]
                    for f in range(n):
                        for j in range(p):
                            acc = 0.0
                            for g in range(n):
                                acc += Fm[f * n + g] * NM[g, j]
                            M[f * n + d + j] = acc
                    JAC[b, q] = fabs(_det(M, <int> n))
    finally:
        cfree(r)
        cfree(uf)
        cfree(mean)
        cfree(M)
        cfree(Fm)
    return logS_arr, jac_arr
