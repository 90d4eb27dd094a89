"""Pure numpy versions of the compiled kernels."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def field_slices(t, x1, x2, xi1, xi2, w_re, w_im, nthreads=1):
    t = np.asarray(t, dtype=np.float64)
    W = np.asarray(w_re, dtype=np.float64) + 1j * np.asarray(w_im, dtype=np.float64)
    out = np.zeros((len(t), len(x1), len(x2)), dtype=np.complex128)
    if not (len(t) and len(x1) and len(x2) and W.size):
        return out
    live = np.flatnonzero(np.any(W != 0, axis=1))
    W = W[live]
    xi1 = np.asarray(xi1)[live]
    E1 = np.exp(1j * np.multiply.outer(np.asarray(x1), xi1))
    E2T = np.exp(1j * np.multiply.outer(np.asarray(x2), np.asarray(xi2))).T.copy()

    def one(it):
        phase = np.multiply.outer(t[it] * xi1, xi2)
        A = W * np.exp(1j * phase)
        out[it] = (E1 @ A) @ E2T

    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            list(pool.map(one, range(len(t))))
    else:
        for it in range(len(t)):
            one(it)
    return out


def pairwise_sum(a):
    """Sum by a fixed binary tree over the zero-padded power-of-two length."""
    a = np.asarray(a, dtype=np.float64).ravel()
    n = len(a)
    if n == 0:
        return 0.0
    size = 1 << (n - 1).bit_length()
    b = np.zeros(size, dtype=np.float64)
    b[:n] = a
    while len(b) > 1:
        b = b[0::2] + b[1::2]
    return float(b[0])
