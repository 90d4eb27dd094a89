"""Evaluation of the extension operator for the saddle ``tau = xi_1 xi_2``.

``E f(t, x) = int f(xi) exp(i (t xi_1 xi_2 + x_1 xi_1 + x_2 xi_2)) dxi``,
approximated by the midpoint rule on dyadic blocks and sampled on a
truncated spacetime lattice.  The positive sign is kept, so the ``t = 0``
slice is the Fourier transform of ``f`` at ``-x``.
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _backend
from .dyadic import N_MAX, CellSet, DomainError, ExponentPair, measure


class NumericGuardError(ValueError):
    """The lattice cannot resolve the oscillation of the finest cells."""


@dataclass(frozen=True, eq=False)
class Density:
    """A function on a cell set, constant on cells.

    ``weights`` are per-cell values aligned with ``support.cells`` (``None``
    means the characteristic function).  Quadrature nodes sit at the centres
    of blocks of side ``2^-nodes[0] x 2^-nodes[1]``; the support must be a
    union of such blocks.
    """

    support: CellSet
    weights: np.ndarray | None = None
    nodes: tuple[int, int] | None = None

    def __post_init__(self):
        N = self.support.N
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.complex128).ravel()
            if len(w) != len(self.support):
                raise DomainError("one weight per cell is required")
            object.__setattr__(self, "weights", w)
        nodes = self.nodes or (N, N)
        if not all(0 <= n <= N for n in nodes):
            raise DomainError(f"node resolution {nodes} must lie in [0, {N}]")
        object.__setattr__(self, "nodes", tuple(int(n) for n in nodes))
        if nodes != (N, N) and len(self.support):
            blocks, counts = self._block_counts()
            if not np.all(counts == 1 << (2 * N - nodes[0] - nodes[1])):
                raise DomainError("support is not a union of quadrature blocks")

    def _block_ids(self) -> np.ndarray:
        N = self.support.N
        n1, n2 = self.nodes
        c = self.support.cells
        return np.stack([c[:, 0] >> (N - n1), c[:, 1] >> (N - n2)], axis=1)

    def _block_counts(self):
        return np.unique(self._block_ids(), axis=0, return_counts=True)

    def is_empty(self) -> bool:
        return len(self.support) == 0

    def l2_norm(self) -> float:
        area = 2.0 ** (-2 * self.support.N)
        if self.weights is None:
            return math.sqrt(len(self.support) * area)
        return math.sqrt(float(np.sum(np.abs(self.weights) ** 2)) * area)

    def lp_norm(self, p) -> float:
        area = 2.0 ** (-2 * self.support.N)
        p = float(p)
        if self.weights is None:
            return (len(self.support) * area) ** (1 / p)
        return (float(np.sum(np.abs(self.weights) ** p)) * area) ** (1 / p)

    def dense(self, oversample: int = 1):
        """Node coordinates and block integrals on the bounding box.

        Returns ``(xi1, xi2, W)`` with ``W[u, v]`` the integral of the density
        over the sub-block centred at ``(xi1[u], xi2[v])``.
        """
        if self.is_empty():
            return np.zeros(0), np.zeros(0), np.zeros((0, 0), dtype=np.complex128)
        N = self.support.N
        n1, n2 = self.nodes
        q = int(oversample)
        ids = self._block_ids()
        lo = ids.min(axis=0)
        hi = ids.max(axis=0)
        U, V = int(hi[0] - lo[0] + 1), int(hi[1] - lo[1] + 1)
        cell_area = math.ldexp(1.0, -2 * N)
        vals = np.full(len(ids), cell_area, dtype=np.complex128)
        if self.weights is not None:
            vals = self.weights * cell_area
        block = np.zeros((U, V), dtype=np.complex128)
        np.add.at(block, (ids[:, 0] - lo[0], ids[:, 1] - lo[1]), vals)
        W = np.kron(block, np.ones((q, q))) / (q * q)
        xi1 = np.ldexp((np.arange(U * q) + lo[0] * q + 0.5) / q, -n1)
        xi2 = np.ldexp((np.arange(V * q) + lo[1] * q + 0.5) / q, -n2)
        return xi1, xi2, W

    def node_spacing(self, oversample: int = 1) -> tuple[float, float]:
        n1, n2 = self.nodes
        return math.ldexp(1.0, -n1) / oversample, math.ldexp(1.0, -n2) / oversample


def characteristic(A: CellSet) -> Density:
    return Density(A)


def _axis(R: float, M: int) -> np.ndarray:
    h = 2.0 * R / M
    return (np.arange(M) - M // 2) * h


@dataclass(frozen=True)
class SpacetimeGrid:
    """Lattice ``(i - M//2) h`` per axis with ``h = 2R/M``; always contains 0.

    The second spatial axis defaults to the first; matched grids for
    parabolic rescaling set it separately.
    """

    R_t: float = 8.0
    R_x: float = 8.0
    M_t: int = 65
    M_x: int = 128
    R_x2: float | None = None
    M_x2: int | None = None

    def __post_init__(self):
        if self.R_x2 is None:
            object.__setattr__(self, "R_x2", self.R_x)
        if self.M_x2 is None:
            object.__setattr__(self, "M_x2", self.M_x)
        for R in (self.R_t, self.R_x, self.R_x2):
            if not R > 0:
                raise DomainError("half-widths must be positive")
        for M in (self.M_t, self.M_x, self.M_x2):
            if int(M) < 2:
                raise DomainError("at least two samples per axis are required")

    @property
    def h_t(self) -> float:
        return 2.0 * self.R_t / self.M_t

    @property
    def h_x(self) -> float:
        return 2.0 * self.R_x / self.M_x

    @property
    def h_x2(self) -> float:
        return 2.0 * self.R_x2 / self.M_x2

    @property
    def cell_volume(self) -> float:
        return self.h_t * self.h_x * self.h_x2

    @property
    def isotropic(self) -> bool:
        return self.R_x2 == self.R_x and self.M_x2 == self.M_x

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.M_t, self.M_x, self.M_x2)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _axis(self.R_t, self.M_t), _axis(self.R_x, self.M_x), _axis(self.R_x2, self.M_x2)

    def rescaled(self, a: int, b: int) -> "SpacetimeGrid":
        """The grid matched to the rescaling ``xi -> (2^-a xi_1, 2^-b xi_2)``."""
        return SpacetimeGrid(
            math.ldexp(self.R_t, a + b),
            math.ldexp(self.R_x, a),
            self.M_t,
            self.M_x,
            math.ldexp(self.R_x2, b),
            self.M_x2,
        )

    def scaled(self, kt: int = 0, k1: int = 0, k2: int = 0) -> "SpacetimeGrid":
        """Enlarge the box by ``2^k`` per axis keeping the spacing."""
        return SpacetimeGrid(
            math.ldexp(self.R_t, kt),
            math.ldexp(self.R_x, k1),
            self.M_t << kt,
            self.M_x << k1,
            math.ldexp(self.R_x2, k2),
            self.M_x2 << k2,
        )

    def as_dict(self) -> dict:
        return {
            "R_t": self.R_t,
            "R_x": self.R_x,
            "M_t": self.M_t,
            "M_x": self.M_x,
            "R_x2": self.R_x2,
            "M_x2": self.M_x2,
        }


REFERENCE_GRID = SpacetimeGrid(8.0, 8.0, 65, 128)


@dataclass(frozen=True)
class QuadratureSpec:
    oversample: int = 1
    path: str = "direct"

    def __post_init__(self):
        if self.oversample not in (1, 2, 4):
            raise DomainError("oversample must be 1, 2 or 4")
        if self.path not in ("direct", "slice-transform"):
            raise DomainError(f"unknown path {self.path!r}")


@dataclass(frozen=True, eq=False)
class Field:
    grid: SpacetimeGrid
    samples: np.ndarray = field(repr=False)
    path: str = "direct"

    def __post_init__(self):
        if self.samples.shape != self.grid.shape:
            raise DomainError(f"sample shape {self.samples.shape} != grid shape {self.grid.shape}")

    def __mul__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.samples * other.samples, self.path)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.samples + other.samples, self.path)

    # wire format -----------------------------------------------------------
    def dumps(self) -> bytes:
        g = self.grid
        if not g.isotropic:
            raise DomainError("the binary dump stores isotropic grids only")
        head = struct.pack("<qqdd", g.M_t, g.M_x, g.R_t, g.R_x)
        body = np.ascontiguousarray(self.samples, dtype="<c16").tobytes()
        return head + body

    @classmethod
    def loads(cls, data: bytes) -> "Field":
        M_t, M_x, R_t, R_x = struct.unpack("<qqdd", data[:32])
        grid = SpacetimeGrid(R_t, R_x, M_t, M_x)
        samples = np.frombuffer(data[32:], dtype="<c16").reshape(grid.shape).astype(np.complex128)
        return cls(grid, samples)

    def slice_csv(self, t_indices=None) -> str:
        t, x1, x2 = self.grid.axes()
        idx = range(len(t)) if t_indices is None else t_indices
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x1", "x2", "abs"])
        mag = np.abs(self.samples)
        for it in idx:
            for i in range(len(x1)):
                for j in range(len(x2)):
                    w.writerow([repr(float(t[it])), repr(float(x1[i])), repr(float(x2[j])), repr(float(mag[it, i, j]))])
        return buf.getvalue()


def _same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise DomainError("fields live on different grids")


def zero_field(grid: SpacetimeGrid) -> Field:
    return Field(grid, np.zeros(grid.shape, dtype=np.complex128))


def _check_guard(f: Density, grid: SpacetimeGrid, q: QuadratureSpec) -> None:
    d1, d2 = f.node_spacing(q.oversample)
    if grid.h_x * d1 >= math.pi or grid.h_x2 * d2 >= math.pi:
        raise NumericGuardError(
            f"x-spacing ({grid.h_x}, {grid.h_x2}) cannot resolve node spacing ({d1}, {d2})"
        )


def transform_length(h: float, d: float, tol: float = 1e-9) -> int | None:
    """Integer ``L = 2 pi / (h d)`` when the lattice is FFT-compatible."""
    L = 2.0 * math.pi / (h * d)
    Li = round(L)
    if Li >= 2 and abs(L - Li) <= tol * L:
        return int(Li)
    return None


def _slice_transform(f: Density, grid: SpacetimeGrid, q: QuadratureSpec, L1: int, L2: int, backend=None) -> np.ndarray:
    t, x1, x2 = grid.axes()
    xi1, xi2, W = f.dense(q.oversample)
    d1, d2 = f.node_spacing(q.oversample)
    g1 = np.rint(xi1 / d1 - 0.5).astype(np.int64)
    g2 = np.rint(xi2 / d2 - 0.5).astype(np.int64)
    k1 = np.arange(grid.M_x) - grid.M_x // 2
    k2 = np.arange(grid.M_x2) - grid.M_x2 // 2
    # exp(i k h (g + 1/2) d) = exp(i k h d / 2) exp(2 pi i k g / L)
    half1 = np.exp(0.5j * x1 * d1)
    half2 = np.exp(0.5j * x2 * d2)
    out = np.empty(grid.shape, dtype=np.complex128)
    r1 = np.mod(g1, L1)
    r2 = np.mod(g2, L2)
    for it, tv in enumerate(t):
        A = W * np.exp(1j * (tv * xi1)[:, None] * xi2[None, :])
        folded = np.zeros((L1, L2), dtype=np.complex128)
        np.add.at(folded, (r1[:, None], r2[None, :]), A)
        spectrum = np.fft.ifft2(folded) * (L1 * L2)
        out[it] = spectrum[np.mod(k1, L1)][:, np.mod(k2, L2)] * half1[:, None] * half2[None, :]
    return out


def extend(f: Density, grid: SpacetimeGrid = REFERENCE_GRID, q: QuadratureSpec = QuadratureSpec(), backend: str | None = None) -> Field:
    """Sample ``E f`` on ``grid`` by the midpoint rule.

    ``q.path == "slice-transform"`` evaluates each time slice with a 2-D FFT
    when ``2 pi / (h_x * node spacing)`` is an integer on both spatial axes
    and falls back to the direct sum otherwise.
    """
    if f.is_empty():
        return zero_field(grid)
    _check_guard(f, grid, q)
    if q.path == "slice-transform":
        d1, d2 = f.node_spacing(q.oversample)
        L1 = transform_length(grid.h_x, d1)
        L2 = transform_length(grid.h_x2, d2)
        if L1 and L2:
            return Field(grid, _slice_transform(f, grid, q, L1, L2), "slice-transform")
    t, x1, x2 = grid.axes()
    xi1, xi2, W = f.dense(q.oversample)
    kern = _backend.get(backend)
    nthreads = _backend.threads()
    w_re = np.ascontiguousarray(W.real)
    w_im = np.ascontiguousarray(W.imag)
    U, V = W.shape
    M1, M2 = len(x1), len(x2)
    # contract the cheaper axis first
    if M1 * U * V + M1 * V * M2 <= M2 * U * V + M2 * U * M1:
        samples = kern.field_slices(t, x1, x2, xi1, xi2, w_re, w_im, nthreads)
    else:
        swapped = kern.field_slices(
            t, x2, x1, xi2, xi1, np.ascontiguousarray(w_re.T), np.ascontiguousarray(w_im.T), nthreads
        )
        samples = np.ascontiguousarray(swapped.transpose(0, 2, 1))
    return Field(grid, samples, "direct")


# -- norms ---------------------------------------------------------------------


def _check_p(p, quasi: bool) -> float:
    pf = float(p)
    if not pf > 0:
        raise DomainError("p must be positive")
    if pf < 1 and not quasi:
        raise DomainError(f"p = {p} < 1 gives a quasi-norm; pass quasi=True")
    return pf


def lp_power(F: Field, p, quasi: bool = False, backend: str | None = None) -> float:
    """``sum |F|^p h_t h_x1 h_x2`` with a fixed pairwise summation tree."""
    pf = _check_p(p, quasi)
    if not np.all(np.isfinite(F.samples)):
        raise NumericGuardError("non-finite field samples")
    vals = np.ascontiguousarray(np.abs(F.samples).ravel() ** pf)
    return float(_backend.get(backend).pairwise_sum(vals)) * F.grid.cell_volume


def lp_norm(F: Field, p, quasi: bool = False, backend: str | None = None) -> float:
    pf = _check_p(p, quasi)
    return lp_power(F, p, quasi, backend) ** (1.0 / pf)


def extension_norm(f: Density, grid: SpacetimeGrid, p, q: QuadratureSpec = QuadratureSpec()) -> float:
    return lp_norm(extend(f, grid, q), p)


def bilinear_norm(f: Density, g: Density, grid: SpacetimeGrid, e: ExponentPair, q: QuadratureSpec = QuadratureSpec()) -> float:
    """``|| E f * E g ||_s`` on the grid."""
    if f.is_empty() or g.is_empty():
        return 0.0
    return lp_norm(extend(f, grid, q) * extend(g, grid, q), e.s)


def ratio(omega: CellSet | Density, e: ExponentPair, grid: SpacetimeGrid = REFERENCE_GRID, q: QuadratureSpec = QuadratureSpec()) -> float:
    """Restricted-type ratio ``||E chi||_2s / |omega|^(1/s')``."""
    f = omega if isinstance(omega, Density) else Density(omega)
    if f.is_empty():
        raise DomainError("ratio of an empty set")
    if f.weights is not None:
        raise DomainError("ratio is defined for characteristic functions")
    area = float(measure(f.support))
    return extension_norm(f, grid, 2 * e.s, q) / area ** float(1 / e.s_dual)


def parabolic_rescale(f: Density, a: int, b: int) -> Density:
    """Push ``f`` forward under ``(xi_1, xi_2) -> (2^-a xi_1, 2^-b xi_2)``.

    On grids related by :meth:`SpacetimeGrid.rescaled`, samples obey
    ``E f'(t, x) = 2^-(a+b) E f(2^-(a+b) t, 2^-a x_1, 2^-b x_2)`` exactly.
    """
    if a < 0 or b < 0:
        raise DomainError("rescaling exponents must be nonnegative")
    A = f.support
    N2 = A.N + max(a, b)
    if N2 > N_MAX:
        raise DomainError(f"rescaled resolution {N2} exceeds {N_MAX}")
    fa, fb = 1 << (N2 - A.N - a), 1 << (N2 - A.N - b)
    n1, n2 = f.nodes
    if not len(A):
        return Density(CellSet.empty(N2, A.domain), None, (n1 + a, n2 + b))
    du, dv = np.meshgrid(np.arange(fa), np.arange(fb), indexing="ij")
    sub = np.stack([du.ravel(), dv.ravel()], axis=1)
    base = A.cells * np.array([fa, fb])
    cells = (base[:, None, :] + sub[None, :, :]).reshape(-1, 2)
    weights = None
    if f.weights is not None:
        weights = np.repeat(f.weights, fa * fb)
    support = CellSet(N2, cells, A.domain)
    if weights is not None:
        # CellSet sorts its cells; carry the weights along
        order = np.lexsort((cells[:, 1], cells[:, 0]))
        weights = weights[order]
    return Density(support, weights, (n1 + a, n2 + b))


# -- truncation ----------------------------------------------------------------


@dataclass(frozen=True)
class TailReport:
    sizes: list[float]
    norms: list[float]
    exponent: float | None
    extrapolated: float
    uncertainty: float
    fitted_exponent: float | None = None

    def as_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "norms": self.norms,
            "tail_exponent": self.exponent,
            "fitted_exponent": self.fitted_exponent,
            "extrapolated": self.extrapolated,
            "uncertainty": self.uncertainty,
        }


def _geometric_rest(last_increment: float, factor: float, beta: float) -> float:
    q = factor ** (-beta)
    return last_increment * q / (1 - q)


def tail_report(
    omega: CellSet,
    e: ExponentPair,
    grids: list[SpacetimeGrid],
    q: QuadratureSpec = QuadratureSpec(),
    decay_rate: float | None = None,
) -> TailReport:
    """Norms on nested boxes and a power-law extrapolation of the tail.

    The boxes must share their spacing and grow by a common factor ``c``.
    Increments of ``||E chi||_p^p`` between boxes are modelled as
    ``R^-beta``.  The dispersive bound ``|E f(t, x)| <~ |t|^-1`` on a cone of
    volume ``~R^3`` gives ``beta = p - 3`` asymptotically (``decay_rate``
    overrides it); small boxes are usually pre-asymptotic, so the fitted
    ``beta`` is reported alongside and enters the uncertainty.
    """
    p = 2 * e.s
    pf = float(p)
    sizes = [g.R_t for g in grids]
    if not omega:
        return TailReport(sizes, [0.0] * len(grids), None, 0.0, 0.0)
    f = Density(omega)
    powers = [lp_power(extend(f, g, q), p) for g in grids]
    norms = [float(v ** (1 / pf)) for v in powers]
    for a, b in zip(powers, powers[1:]):
        if b < a:
            raise AssertionError(f"truncated norms decrease ({a} -> {b}); boxes not nested")
    if len(grids) < 2:
        return TailReport(sizes, norms, None, norms[-1], float("inf"))
    factor = sizes[1] / sizes[0]
    if factor <= 1 or not np.allclose(np.array(sizes[1:]) / np.array(sizes[:-1]), factor):
        raise DomainError("box sizes must grow geometrically")
    incs = np.diff(powers)
    beta = pf - 3.0 if decay_rate is None else float(decay_rate)
    fitted = None
    if len(incs) >= 2 and np.all(incs > 0):
        fitted = float(-np.polyfit(np.log(sizes[1:]), np.log(incs), 1)[0])
    if incs[-1] <= 0:
        return TailReport(sizes, norms, beta, norms[-1], 0.0, fitted)
    if beta <= 0:
        return TailReport(sizes, norms, beta, float("inf"), float("inf"), fitted)
    extrap = (powers[-1] + _geometric_rest(incs[-1], factor, beta)) ** (1 / pf)
    spread = extrap - norms[-1]
    if fitted is not None and fitted > 0:
        alt = (powers[-1] + _geometric_rest(incs[-1], factor, fitted)) ** (1 / pf)
        spread = max(spread, abs(alt - extrap))
    return TailReport(sizes, norms, beta, float(extrap), float(spread), fitted)
