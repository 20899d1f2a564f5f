# Compiled kernel backend; loop-for-loop twin of hrtfkit._kernels._py.
# Compiled with -ffp-contract=off so scalar arithmetic matches the numpy
# fallback's unfused IEEE operations.

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def fft_kernel(cnp.complex128_t[:, ::1] a,
               cnp.int64_t[::1] rev,
               cnp.complex128_t[::1] tw):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    out_arr = np.empty((m, n), dtype=np.complex128)
    cdef cnp.complex128_t[:, ::1] out = out_arr
    cdef Py_ssize_t r, i, j, b0, size, half, stride
    cdef double complex w, t, u
    for r in range(m):
        for i in range(n):
            out[r, i] = a[r, rev[i]]
        size = 2
        while size <= n:
            half = size >> 1
            stride = n // size
            for b0 in range(0, n, size):
                for j in range(half):
                    w = tw[j * stride]
                    t = w * out[r, b0 + half + j]
                    u = out[r, b0 + j]
                    out[r, b0 + j] = u + t
                    out[r, b0 + half + j] = u - t
            size <<= 1
    return out_arr


def jacobi_kernel(double[:, ::1] A, double[:, ::1] V, double tol, int max_sweeps):
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t p, q, k
    cdef int sweep
    cdef double off, apq, theta, t, c, s, akp, akq
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += A[p, q] * A[p, q]
        if sqrt(off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = A[p, k]
                    akq = A[q, k]
                    A[p, k] = c * akp - s * akq
                    A[q, k] = s * akp + c * akq
                for k in range(n):
                    akp = V[k, p]
                    akq = V[k, q]
                    V[k, p] = c * akp - s * akq
                    V[k, q] = s * akp + c * akq
    return max_sweeps


def xcorr_kernel(double[::1] a, double[::1] b, long lag_min, long lag_max):
    cdef Py_ssize_t la = a.shape[0]
    cdef Py_ssize_t lb = b.shape[0]
    out_arr = np.zeros(lag_max - lag_min + 1)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n, n_lo, n_hi
    cdef long lag
    cdef double acc
    for i in range(lag_max - lag_min + 1):
        lag = lag_min + <long> i
        n_lo = 0 if lag >= 0 else -lag
        n_hi = lb if lb < la - lag else la - lag
        acc = 0.0
        for n in range(n_lo, n_hi):
            acc += a[n + lag] * b[n]
        out[i] = acc
    return out_arr
