# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: field evaluation over time slices and a fixed-tree sum.

Each time slice is produced by exactly one thread with a fixed loop order,
so results do not depend on the thread count.
"""
import numpy as np

cimport numpy as cnp
from cython.parallel cimport parallel, prange
from libc.math cimport cos, sin
from libc.stdlib cimport free, malloc

from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()


def field_slices(
    const double[::1] t,
    const double[::1] x1,
    const double[::1] x2,
    const double[::1] xi1,
    const double[::1] xi2,
    const double[:, ::1] w_re,
    const double[:, ::1] w_im,
    int nthreads=1,
):
    """Samples ``sum_{u,v} W[u,v] exp(i (t xi1 xi2 + x1 xi1 + x2 xi2))``.

    Returns a complex array of shape ``(len(t), len(x1), len(x2))``.
    """
    cdef Py_ssize_t Mt = t.shape[0], M1 = x1.shape[0], M2 = x2.shape[0]
    cdef Py_ssize_t U = xi1.shape[0], V = xi2.shape[0]
    cdef Py_ssize_t v, it, k
    cdef double ph, c, s, tx

    out = np.zeros((Mt, M1, M2), dtype=np.complex128)
    if Mt == 0 or M1 == 0 or M2 == 0 or U == 0 or V == 0:
        return out
    rows = np.array(
        [u for u in range(U) if np.any(np.asarray(w_re[u])) or np.any(np.asarray(w_im[u]))],
        dtype=np.intp,
    )
    cdef Py_ssize_t nlive = rows.shape[0]
    if nlive == 0:
        return out
    cdef double complex[:, ::1] E1 = np.exp(1j * np.outer(np.asarray(xi1)[rows], x1))
    cdef double complex[:, ::1] E2 = np.exp(1j * np.outer(xi2, x2))
    cdef double[::1] lxi1 = np.ascontiguousarray(np.asarray(xi1)[rows])
    cdef double[:, ::1] lwr = np.ascontiguousarray(np.asarray(w_re)[rows])
    cdef double[:, ::1] lwi = np.ascontiguousarray(np.asarray(w_im)[rows])
    cdef double complex[:, :, ::1] o = out

    cdef int m1 = <int> M1, m2 = <int> M2, kl = <int> nlive, kv = <int> V
    cdef double complex one = 1.0, zero = 0.0
    cdef char tn = b"N", tt = b"T"
    cdef double complex *A
    cdef double complex *B
    # per slice: A = W * exp(i t xi1 xi2) on live rows, B = E1^T A, F = B E2
    with nogil, parallel(num_threads=nthreads):
        A = <double complex *> malloc(nlive * V * sizeof(double complex))
        B = <double complex *> malloc(M1 * V * sizeof(double complex))
        for it in prange(Mt, schedule="static"):
            for k in range(nlive):
                tx = t[it] * lxi1[k]
                for v in range(V):
                    ph = tx * xi2[v]
                    c = cos(ph)
                    s = sin(ph)
                    A[k * V + v].real = lwr[k, v] * c - lwi[k, v] * s
                    A[k * V + v].imag = lwr[k, v] * s + lwi[k, v] * c
            # column-major views: B^T = A^T E1, F^T = E2^T B^T
            zgemm(&tn, &tt, &kv, &m1, &kl, &one, A, &kv, &E1[0, 0], &m1, &zero, B, &kv)
            zgemm(&tn, &tn, &m2, &m1, &kv, &one, &E2[0, 0], &m2, B, &kv, &zero, &o[it, 0, 0], &m2)
        free(A)
        free(B)
    return out


def pairwise_sum(const double[::1] a):
    """Sum by a fixed binary tree over the zero-padded power-of-two length."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t size = 1, k, half
    if n == 0:
        return 0.0
    while size < n:
        size *= 2
    buf = np.zeros(size, dtype=np.float64)
    cdef double[::1] b = buf
    for k in range(n):
        b[k] = a[k]
    half = size // 2
    while half >= 1:
        for k in range(half):
            b[k] = b[2 * k] + b[2 * k + 1]
        half //= 2
    return b[0]
