"""Dyadic intervals, tiles and sets discretised on dyadic grids.

A :class:`CellSet` at resolution ``N`` is a finite union of closed cells
``[p 2^-N, (p+1) 2^-N] x [q 2^-N, (q+1) 2^-N]``.  Measures are exact
:class:`fractions.Fraction` values; nothing in this module touches floating
point.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

import numpy as np

N_MAX = 16
DOMAINS = ("unit", "signed")


class DomainError(ValueError):
    """Raised for values outside the domain an operation is defined on."""


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**9)
    return Fraction(x)


def dual_exponent(s) -> Fraction:
    """Hölder dual ``s / (s - 1)`` in exact arithmetic."""
    s = _as_fraction(s)
    if s <= 1:
        raise DomainError(f"dual exponent needs s > 1, got {s}")
    return s / (s - 1)


@dataclass(frozen=True)
class ExponentPair:
    """Exponents ``(s, r)`` with derived ``s' = s/(s-1)``.

    Construction accepts the closed range ``1 < s <= 2``, ``1 <= r <= s'`` so
    that the critical line ``r = s'`` and the Stein--Tomas endpoint ``s = 2``
    can be scanned; :attr:`admissible` reports whether the pair lies in the
    open range ``3/2 < s < 2``, ``r < s'`` the estimates are stated for.
    """

    s: Fraction
    r: Fraction

    def __post_init__(self):
        s = _as_fraction(self.s)
        r = _as_fraction(self.r)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "r", r)
        if not (1 < s <= 2):
            raise DomainError(f"s must lie in (1, 2], got {s}")
        if not (1 <= r <= dual_exponent(s)):
            raise DomainError(f"r must lie in [1, s'] = [1, {dual_exponent(s)}], got {r}")

    @property
    def s_dual(self) -> Fraction:
        return dual_exponent(self.s)

    @property
    def admissible(self) -> bool:
        return Fraction(3, 2) < self.s < 2 and self.r < self.s_dual

    @classmethod
    def critical(cls, s) -> "ExponentPair":
        s = _as_fraction(s)
        return cls(s, dual_exponent(s))

    def as_dict(self) -> dict:
        return {"s": str(self.s), "r": str(self.r), "s_dual": str(self.s_dual)}


def bilinear_scaling_exponent(e: ExponentPair) -> Fraction:
    """Exponent ``2 - 2/s - 2/r`` of the rescaled bilinear bound."""
    return 2 - 2 / e.s - 2 / e.r


def dyadic_bin(length: Fraction) -> int:
    """The ``K`` with ``length`` in ``(2^-K-1, 2^-K]``; ``length`` in (0, 1]."""
    length = _as_fraction(length)
    if not 0 < length <= 1:
        raise DomainError(f"bin needs a length in (0, 1], got {length}")
    # largest K with length * 2^K <= 1
    return (length.denominator // length.numerator).bit_length() - 1


def count_bin(count: int, N: int) -> int:
    """:func:`dyadic_bin` of ``count * 2^-N`` using integers only."""
    if count <= 0 or count > (1 << N):
        raise DomainError(f"count {count} outside (0, 2^{N}]")
    return ((1 << N) // count).bit_length() - 1


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """``[m 2^-n, (m+1) 2^-n]``."""

    n: int
    m: int

    def __post_init__(self):
        if not 0 <= self.n <= N_MAX:
            raise DomainError(f"scale {self.n} outside [0, {N_MAX}]")

    @property
    def length(self) -> Fraction:
        return Fraction(1, 1 << self.n)

    @property
    def left(self) -> Fraction:
        return Fraction(self.m, 1 << self.n)

    @property
    def right(self) -> Fraction:
        return Fraction(self.m + 1, 1 << self.n)

    def parent(self) -> "DyadicInterval":
        return DyadicInterval(self.n - 1, self.m >> 1)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return DyadicInterval(self.n + 1, 2 * self.m), DyadicInterval(self.n + 1, 2 * self.m + 1)

    def ancestor(self, n: int) -> "DyadicInterval":
        if n > self.n:
            raise DomainError("ancestor scale must be coarser")
        return DyadicInterval(n, self.m >> (self.n - n))

    def cell_range(self, N: int) -> tuple[int, int]:
        """Half-open range of resolution-``N`` cells inside the interval."""
        if N < self.n:
            raise DomainError("cell resolution coarser than the interval")
        shift = N - self.n
        return self.m << shift, (self.m + 1) << shift

    def in_domain(self, domain: str) -> bool:
        top = 1 << self.n
        lo = 0 if domain == "unit" else -top
        return lo <= self.m < top


@dataclass(frozen=True, order=True)
class Tile:
    """Product ``h x v`` of a horizontal and a vertical dyadic interval."""

    h: DyadicInterval
    v: DyadicInterval

    @classmethod
    def from_indices(cls, j: int, mh: int, k: int, mv: int) -> "Tile":
        return cls(DyadicInterval(j, mh), DyadicInterval(k, mv))

    @property
    def j(self) -> int:
        return self.h.n

    @property
    def k(self) -> int:
        return self.v.n

    @property
    def area(self) -> Fraction:
        return self.h.length * self.v.length

    def as_list(self) -> list[int]:
        return [self.h.n, self.h.m, self.v.n, self.v.m]

    def cells(self, N: int, domain: str = "unit") -> "CellSet":
        p0, p1 = self.h.cell_range(N)
        q0, q1 = self.v.cell_range(N)
        pp, qq = np.meshgrid(np.arange(p0, p1), np.arange(q0, q1), indexing="ij")
        return CellSet(N, np.stack([pp.ravel(), qq.ravel()], axis=1), domain)


def _check_domain(N: int, domain: str) -> None:
    if domain not in DOMAINS:
        raise DomainError(f"unknown domain {domain!r}")
    if not 0 <= N <= N_MAX:
        raise DomainError(f"resolution {N} outside [0, {N_MAX}]")


def _domain_bounds(N: int, domain: str) -> tuple[int, int]:
    top = 1 << N
    return (0, top) if domain == "unit" else (-top, top)


def _sorted_unique_2d(cells: np.ndarray, reject_duplicates: bool) -> np.ndarray:
    if cells.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    order = np.lexsort((cells[:, 1], cells[:, 0]))
    cells = cells[order]
    dup = np.all(cells[1:] == cells[:-1], axis=1)
    if dup.any():
        if reject_duplicates:
            raise DomainError("duplicate cells")
        cells = cells[np.concatenate([[True], ~dup])]
    return cells


@dataclass(frozen=True, eq=False)
class CellSet:
    """Finite union of resolution-``N`` cells.

    ``cells`` is an ``(n, 2)`` integer array sorted lexicographically by
    ``(p, q)`` without duplicates; the constructor sorts and deduplicates.
    """

    N: int
    cells: np.ndarray = field(repr=False)
    domain: str = "unit"

    def __post_init__(self):
        _check_domain(self.N, self.domain)
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        cells = _sorted_unique_2d(cells, reject_duplicates=False)
        lo, hi = _domain_bounds(self.N, self.domain)
        if cells.size and (cells.min() < lo or cells.max() >= hi):
            raise DomainError(f"cells outside the {self.domain} domain at resolution {self.N}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    # construction -------------------------------------------------------
    @classmethod
    def empty(cls, N: int, domain: str = "unit") -> "CellSet":
        return cls(N, np.zeros((0, 2), dtype=np.int64), domain)

    @classmethod
    def full(cls, N: int, domain: str = "unit") -> "CellSet":
        lo, hi = _domain_bounds(N, domain)
        return cls.from_mask(np.ones((hi - lo, hi - lo), dtype=bool), N, domain)

    @classmethod
    def from_mask(cls, mask: np.ndarray, N: int, domain: str = "unit") -> "CellSet":
        lo, hi = _domain_bounds(N, domain)
        if mask.shape != (hi - lo, hi - lo):
            raise DomainError(f"mask shape {mask.shape} does not match resolution {N}")
        p, q = np.nonzero(mask)
        return cls(N, np.stack([p + lo, q + lo], axis=1), domain)

    @classmethod
    def from_tiles(cls, tiles: Iterable[Tile], N: int, domain: str = "unit") -> "CellSet":
        parts = [t.cells(N, domain).cells for t in tiles]
        if not parts:
            return cls.empty(N, domain)
        return cls(N, np.concatenate(parts), domain)

    # basic protocol ------------------------------------------------------
    def __len__(self) -> int:
        return len(self.cells)

    def __bool__(self) -> bool:
        return len(self.cells) > 0

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return (tuple(c) for c in self.cells.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellSet):
            return NotImplemented
        return (
            self.N == other.N
            and self.domain == other.domain
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self):
        return hash((self.N, self.domain, self.cells.tobytes()))

    def __repr__(self) -> str:
        return f"CellSet(N={self.N}, domain={self.domain!r}, count={len(self)})"

    # geometry -------------------------------------------------------------
    @property
    def offset(self) -> int:
        return _domain_bounds(self.N, self.domain)[0]

    @property
    def side(self) -> int:
        lo, hi = _domain_bounds(self.N, self.domain)
        return hi - lo

    def to_mask(self) -> np.ndarray:
        mask = np.zeros((self.side, self.side), dtype=bool)
        if len(self):
            mask[self.cells[:, 0] - self.offset, self.cells[:, 1] - self.offset] = True
        return mask

    def keys(self) -> np.ndarray:
        """Injective integer encoding of the cells, monotone in (p, q)."""
        return (self.cells[:, 0] - self.offset) * self.side + (self.cells[:, 1] - self.offset)

    def _from_keys(self, keys: np.ndarray) -> "CellSet":
        p = keys // self.side + self.offset
        q = keys % self.side + self.offset
        return CellSet(self.N, np.stack([p, q], axis=1), self.domain)

    def _check_compatible(self, other: "CellSet") -> None:
        if self.N != other.N or self.domain != other.domain:
            raise DomainError("cell sets at different resolutions or domains")

    def union(self, other: "CellSet") -> "CellSet":
        self._check_compatible(other)
        return CellSet(self.N, np.concatenate([self.cells, other.cells]), self.domain)

    def intersection(self, other: "CellSet") -> "CellSet":
        self._check_compatible(other)
        return self._from_keys(np.intersect1d(self.keys(), other.keys()))

    def difference(self, other: "CellSet") -> "CellSet":
        self._check_compatible(other)
        return self._from_keys(np.setdiff1d(self.keys(), other.keys()))

    def issubset(self, other: "CellSet") -> bool:
        self._check_compatible(other)
        return bool(np.isin(self.keys(), other.keys()).all())

    def isdisjoint(self, other: "CellSet") -> bool:
        self._check_compatible(other)
        return not np.isin(self.keys(), other.keys()).any()

    def select_columns(self, columns) -> "CellSet":
        cols = np.asarray(columns, dtype=np.int64)
        return CellSet(self.N, self.cells[np.isin(self.cells[:, 0], cols)], self.domain)

    def select_rows(self, rows) -> "CellSet":
        rows = np.asarray(rows, dtype=np.int64)
        return CellSet(self.N, self.cells[np.isin(self.cells[:, 1], rows)], self.domain)

    def restrict(self, tile: Tile) -> "CellSet":
        """Cells of the set lying inside ``tile``."""
        p0, p1 = tile.h.cell_range(self.N)
        q0, q1 = tile.v.cell_range(self.N)
        c = self.cells
        keep = (c[:, 0] >= p0) & (c[:, 0] < p1) & (c[:, 1] >= q0) & (c[:, 1] < q1)
        return CellSet(self.N, c[keep], self.domain)

    def refine(self, N: int) -> "CellSet":
        """The same set at a finer resolution."""
        if N < self.N:
            raise DomainError("refine needs a finer resolution")
        f = 1 << (N - self.N)
        if not len(self):
            return CellSet.empty(N, self.domain)
        du, dv = np.meshgrid(np.arange(f), np.arange(f), indexing="ij")
        sub = np.stack([du.ravel(), dv.ravel()], axis=1)
        cells = (self.cells[:, None, :] * f + sub[None, :, :]).reshape(-1, 2)
        return CellSet(N, cells, self.domain)

    def shifted(self, dp: int, dq: int, domain: str | None = None) -> "CellSet":
        """Translate by ``(dp, dq)`` cells, optionally into another domain."""
        return CellSet(self.N, self.cells + np.array([dp, dq]), domain or self.domain)

    def as_domain(self, domain: str) -> "CellSet":
        return CellSet(self.N, self.cells, domain)

    def tiles_meeting(self, j: int, k: int) -> list[Tile]:
        """Tiles of side ``2^-j x 2^-k`` that contain at least one cell."""
        if j > self.N or k > self.N:
            raise DomainError("tile scales must not exceed the resolution")
        if not len(self):
            return []
        idx = np.unique(
            np.stack([self.cells[:, 0] >> (self.N - j), self.cells[:, 1] >> (self.N - k)], axis=1),
            axis=0,
        )
        return [Tile.from_indices(j, int(a), k, int(b)) for a, b in idx.tolist()]

    # serialisation --------------------------------------------------------
    def to_json(self) -> dict:
        return {"resolution": self.N, "domain": self.domain, "cells": self.cells.tolist()}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj: dict) -> "CellSet":
        try:
            N = int(obj["resolution"])
            domain = obj.get("domain", "unit")
            raw = obj["cells"]
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed cell set: {exc}") from exc
        cells = np.asarray(raw, dtype=np.int64).reshape(-1, 2)
        _check_domain(N, domain)
        _sorted_unique_2d(cells, reject_duplicates=True)
        return cls(N, cells, domain)

    @classmethod
    def loads(cls, text: str) -> "CellSet":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"malformed cell set: {exc}") from exc
        return cls.from_json(obj)


@dataclass(frozen=True, eq=False)
class CellSet1D:
    """Finite union of resolution-``N`` cells on a line."""

    N: int
    cells: np.ndarray = field(repr=False)
    domain: str = "unit"

    def __post_init__(self):
        _check_domain(self.N, self.domain)
        cells = np.unique(np.asarray(self.cells, dtype=np.int64).ravel())
        lo, hi = _domain_bounds(self.N, self.domain)
        if cells.size and (cells[0] < lo or cells[-1] >= hi):
            raise DomainError("cells outside the domain")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls, N: int, domain: str = "unit") -> "CellSet1D":
        return cls(N, np.zeros(0, dtype=np.int64), domain)

    def __len__(self) -> int:
        return len(self.cells)

    def __bool__(self) -> bool:
        return len(self.cells) > 0

    def __iter__(self):
        return iter(self.cells.tolist())

    def __contains__(self, p) -> bool:
        i = np.searchsorted(self.cells, p)
        return bool(i < len(self.cells) and self.cells[i] == p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellSet1D):
            return NotImplemented
        return self.N == other.N and self.domain == other.domain and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash((self.N, self.domain, self.cells.tobytes()))

    def __repr__(self) -> str:
        return f"CellSet1D(N={self.N}, domain={self.domain!r}, count={len(self)})"

    def union(self, other: "CellSet1D") -> "CellSet1D":
        return CellSet1D(self.N, np.concatenate([self.cells, other.cells]), self.domain)

    def difference(self, other: "CellSet1D") -> "CellSet1D":
        return CellSet1D(self.N, np.setdiff1d(self.cells, other.cells), self.domain)

    def intersection(self, other: "CellSet1D") -> "CellSet1D":
        return CellSet1D(self.N, np.intersect1d(self.cells, other.cells), self.domain)

    def block_counts(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Scale-``n`` ancestors meeting the set and how many cells each holds."""
        return np.unique(self.cells >> (self.N - n), return_counts=True)

    def intervals(self, n: int) -> list[DyadicInterval]:
        """Scale-``n`` dyadic intervals meeting the set."""
        return [DyadicInterval(n, int(m)) for m in np.unique(self.cells >> (self.N - n))]


def measure(A: CellSet) -> Fraction:
    return Fraction(len(A), 1 << (2 * A.N))


def measure1d(S: CellSet1D) -> Fraction:
    return Fraction(len(S), 1 << S.N)


def project1(A: CellSet) -> CellSet1D:
    """Column indices carrying at least one cell."""
    return CellSet1D(A.N, A.cells[:, 0], A.domain)


def project2(A: CellSet) -> CellSet1D:
    """Row indices carrying at least one cell."""
    return CellSet1D(A.N, A.cells[:, 1], A.domain)


def column_counts(A: CellSet) -> tuple[np.ndarray, np.ndarray]:
    """Nonempty columns and the number of cells in each."""
    return np.unique(A.cells[:, 0], return_counts=True)


def row_counts(A: CellSet) -> tuple[np.ndarray, np.ndarray]:
    return np.unique(A.cells[:, 1], return_counts=True)


def fiber_length(A: CellSet, p: int) -> Fraction:
    """Length of the vertical fibre of ``A`` over column ``p``."""
    lo, hi = _domain_bounds(A.N, A.domain)
    if not lo <= p < hi:
        raise DomainError(f"column {p} outside the domain")
    count = int(np.count_nonzero(A.cells[:, 0] == p))
    return Fraction(count, 1 << A.N)


def whitney_related(I: DyadicInterval, J: DyadicInterval) -> bool:
    """Non-adjacent distinct intervals whose parents are equal or adjacent."""
    if I.n != J.n:
        raise DomainError("whitney relation needs intervals at the same scale")
    return abs(I.m - J.m) >= 2 and abs((I.m >> 1) - (J.m >> 1)) <= 1


def _related_indices(m: int) -> list[int]:
    parent = m >> 1
    out = []
    for pp in (parent - 1, parent, parent + 1):
        for c in (2 * pp, 2 * pp + 1):
            if abs(c - m) >= 2:
                out.append(c)
    return out


def whitney_pairs(A: CellSet, j: int, k: int) -> list[tuple[Tile, Tile]]:
    """All related tile pairs of ``D_{j,k}`` meeting ``A``, each listed once."""
    tiles = A.tiles_meeting(j, k)
    present = {(t.h.m, t.v.m) for t in tiles}
    pairs = []
    for t in tiles:
        for mh in _related_indices(t.h.m):
            for mv in _related_indices(t.v.m):
                if (mh, mv) in present:
                    other = Tile.from_indices(j, mh, k, mv)
                    if t < other:
                        pairs.append((t, other))
    pairs.sort()
    return pairs


def union_all(sets: Iterable[CellSet], N: int, domain: str = "unit") -> CellSet:
    parts = [s.cells for s in sets]
    if not parts:
        return CellSet.empty(N, domain)
    return CellSet(N, np.concatenate(parts), domain)
