"""Independent reference computations used to freeze derived test values.

Nothing here imports the kernels or the field code of the package; the
oracles work from cell coordinates with ``math.fsum``, closed-form geometric
sums, exact fractions and brute-force enumeration.
"""
from __future__ import annotations

import cmath
import math
from fractions import Fraction


def direct_sample(cells, N, t, x1, x2, weights=None):
    """``sum_c w_c 2^-2N exp(i (t u v + x1 u + x2 v))`` at cell centres."""
    area = 2.0 ** (-2 * N)
    re, im = [], []
    for idx, (p, q) in enumerate(cells):
        u = (p + 0.5) * 2.0**-N
        v = (q + 0.5) * 2.0**-N
        z = area * cmath.exp(1j * (t * u * v + x1 * u + x2 * v))
        if weights is not None:
            z *= weights[idx]
        re.append(z.real)
        im.append(z.imag)
    return complex(math.fsum(re), math.fsum(im))


def _midpoint_sum_1d(lo, n, h, x):
    """``sum_{m<n} h exp(i x (lo + (m + 1/2) h))`` in closed form."""
    if x == 0.0:
        return complex(n * h)
    z = cmath.exp(1j * x * h)
    return h * cmath.exp(1j * x * (lo + h / 2)) * (z**n - 1) / (z - 1)


def box_slice_t0(a1, b1, a2, b2, N, x1, x2):
    """Midpoint rule for the box ``[a1, b1] x [a2, b2]`` at ``t = 0``."""
    h = 2.0**-N
    n1 = round((b1 - a1) / h)
    n2 = round((b2 - a2) / h)
    return _midpoint_sum_1d(a1, n1, h, x1) * _midpoint_sum_1d(a2, n2, h, x2)


def whitney_related_brute(n, m1, m2):
    """Distinct, non-touching scale-``n`` intervals whose parents touch or agree."""
    L = Fraction(1, 1 << n)
    I = (m1 * L, (m1 + 1) * L)
    J = (m2 * L, (m2 + 1) * L)
    if I == J or n == 0:
        return False
    gap = max(I[0], J[0]) - min(I[1], J[1])
    if gap <= 0:
        return False
    P = (Fraction(m1 >> 1, 1 << (n - 1)), Fraction((m1 >> 1) + 1, 1 << (n - 1)))
    Q = (Fraction(m2 >> 1, 1 << (n - 1)), Fraction((m2 >> 1) + 1, 1 << (n - 1)))
    pgap = max(P[0], Q[0]) - min(P[1], Q[1])
    return pgap <= 0


def whitney_scales_brute(N, p1, p2):
    """Scales ``n <= N`` at which the intervals containing cells ``p1, p2`` are related."""
    return [n for n in range(N + 1) if whitney_related_brute(n, p1 >> (N - n), p2 >> (N - n))]


def count_bin_brute(count, N):
    """The ``K`` with ``count 2^-N`` in ``(2^-K-1, 2^-K]`` by scanning."""
    x = Fraction(count, 1 << N)
    K = 0
    while not (Fraction(1, 1 << (K + 1)) < x <= Fraction(1, 1 << K)):
        K += 1
    return K


def t_eta_brute(cells, N, J, i, C):
    """Cells whose topmost ancestor of density ``>= 2^-iC`` has length ``>= 2^-(iC+J)``."""
    cells = set(cells)
    thr = Fraction(1, 1 << (i * C))
    out = set()
    for p in cells:
        for n in range(N + 1):
            m = p >> (N - n)
            block = range(m << (N - n), (m + 1) << (N - n))
            dens = Fraction(sum(1 for c in block if c in cells), 1 << (N - n))
            if dens >= thr:
                if Fraction(1, 1 << n) >= Fraction(1, 1 << (i * C + J)):
                    out.add(p)
                break
    return out


def strata_brute(cells, N, J, C, levels):
    """``S_eta = T_eta minus T_2eta`` over ``levels`` (exponents, coarse to fine)."""
    out, seen = {}, set()
    for i in levels:
        T = t_eta_brute(cells, N, J, i, C)
        out[i] = sorted(T - seen)
        seen |= T
    return out, sorted(set(cells) - seen)
