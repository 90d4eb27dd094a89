"""Fibre-length slicing and the three-stage near-tile stratification.

Dyadic parameters ``eta, rho, delta = 2^-i`` are carried by their exponent
``i``.  All thresholds of the form ``eta^C 2^-J`` are compared exactly, also
for rational ``C``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .dyadic import (
    CellSet,
    CellSet1D,
    DomainError,
    DyadicInterval,
    Tile,
    column_counts,
    count_bin,
    measure,
    measure1d,
    project1,
    project2,
    row_counts,
    union_all,
)


class CoverBoundError(AssertionError):
    """A cover exceeded its count bound; indicates a bug, not bad data."""


@dataclass(frozen=True, order=True)
class DyadicParam:
    """The dyadic number ``2^-i``."""

    i: int

    @property
    def value(self) -> Fraction:
        return Fraction(1, 1 << self.i) if self.i >= 0 else Fraction(1 << -self.i)

    def __float__(self) -> float:
        return float(self.value)

    def half(self) -> "DyadicParam":
        return DyadicParam(self.i + 1)

    @classmethod
    def round_up(cls, x: float) -> "DyadicParam":
        """Smallest dyadic number ``>= x`` (``x > 0``)."""
        if not x > 0:
            raise DomainError("round_up needs a positive value")
        i = math.floor(-math.log2(x))
        # guard the float log at exact powers of two
        while math.ldexp(1.0, -i) < x:
            i -= 1
        while math.ldexp(1.0, -(i + 1)) >= x:
            i += 1
        return cls(i)


@dataclass(frozen=True)
class StructureConfig:
    C: Fraction = Fraction(4)
    eps_min: DyadicParam = DyadicParam(10)
    A_cover: Fraction = Fraction(16)

    def __post_init__(self):
        object.__setattr__(self, "C", Fraction(self.C))
        object.__setattr__(self, "A_cover", Fraction(self.A_cover))
        if isinstance(self.eps_min, int):
            object.__setattr__(self, "eps_min", DyadicParam(self.eps_min))
        if self.C < 1:
            raise DomainError("structure exponent C must be >= 1")
        if self.A_cover < 1:
            raise DomainError("A_cover must be >= 1")
        if self.eps_min.i < 0:
            raise DomainError("eps_min must not exceed 1")

    def levels(self, top: int = 0) -> range:
        """Exponents ``i`` of the dyadic parameters in ``[eps_min, 2^-top]``."""
        return range(top, self.eps_min.i + 1)

    def as_dict(self) -> dict:
        return {"C": str(self.C), "eps_min_log2": -self.eps_min.i, "A_cover": str(self.A_cover)}


def _ge_pow2(x: Fraction, e: Fraction) -> bool:
    """Exact test ``x >= 2^e`` for ``x >= 0`` and rational ``e``."""
    if x <= 0:
        return False
    e = Fraction(e)
    a, b = e.numerator, e.denominator
    lhs = x**b
    return lhs >= (Fraction(1 << a) if a >= 0 else Fraction(1, 1 << -a))


def _le_pow2(x: Fraction, e: Fraction) -> bool:
    """Exact test ``x <= 2^e``."""
    if x <= 0:
        return True
    e = Fraction(e)
    a, b = e.numerator, e.denominator
    return x**b <= (Fraction(1 << a) if a >= 0 else Fraction(1, 1 << -a))


def count_bound(cfg: StructureConfig, i: int, power) -> Fraction:
    """``A_cover * (2^-i)^(-power*C)`` as an exact value when possible."""
    e = Fraction(power) * cfg.C * i
    if e.denominator == 1:
        return cfg.A_cover * (1 << int(e))
    return cfg.A_cover * Fraction(2.0 ** float(e))


# -- fibre slicing -------------------------------------------------------------


@dataclass(frozen=True)
class FiberDecomposition:
    source: CellSet
    parts: dict[int, CellSet]

    def __iter__(self):
        return iter(sorted(self.parts.items()))


def fiber_slice(omega: CellSet) -> FiberDecomposition:
    """Split ``omega`` by the dyadic bin of each column's fibre length."""
    if omega.domain != "unit":
        raise DomainError("fibre slicing runs on the unit domain")
    cols, counts = column_counts(omega)
    bins = np.array([count_bin(int(c), omega.N) for c in counts], dtype=np.int64)
    parts = {}
    for K in np.unique(bins).tolist():
        parts[int(K)] = omega.select_columns(cols[bins == K])
    return FiberDecomposition(omega, parts)


def choose_J(omega: CellSet) -> int:
    """The ``J`` with ``|pi_1(omega)|`` in ``(2^-J-1, 2^-J]``."""
    if not omega:
        raise DomainError("choose_J needs a nonempty set")
    return count_bin(len(project1(omega)), omega.N)


# -- maximal intervals and axis stratification ---------------------------------


def _topmost_qualifying(S: CellSet1D, threshold_log2: Fraction) -> np.ndarray:
    """For each cell of ``S``, the coarsest scale ``n`` whose dyadic ancestor
    has density ``>= 2^threshold_log2``."""
    N = S.N
    cells = S.cells
    n_star = np.full(len(cells), N, dtype=np.int64)
    for n in range(N, -1, -1):
        anc = cells >> (N - n)
        blocks, inverse, counts = np.unique(anc, return_inverse=True, return_counts=True)
        size = 1 << (N - n)
        ok = np.array([_ge_pow2(Fraction(int(c), size), threshold_log2) for c in counts])
        hit = ok[inverse]
        n_star[hit] = n
    return n_star


def maximal_interval(S: CellSet1D, p: int, eta: DyadicParam, C) -> DyadicInterval | None:
    """Largest dyadic ancestor ``I`` of cell ``p`` with ``|I ∩ S| >= eta^C |I|``."""
    if p not in S:
        raise DomainError(f"cell {p} not in the set")
    C = Fraction(C)
    N = S.N
    for n in range(0, N + 1):
        m = p >> (N - n)
        lo, hi = m << (N - n), (m + 1) << (N - n)
        count = int(np.count_nonzero((S.cells >= lo) & (S.cells < hi)))
        if _ge_pow2(Fraction(count, 1 << (N - n)), -eta.i * C):
            return DyadicInterval(n, m)
    return None


@dataclass(frozen=True)
class AxisStratification:
    """Strata ``S_eta`` keyed by the exponent of ``eta`` plus the cells that
    never qualify down to ``eps_min``."""

    strata: dict[int, CellSet1D]
    residual: CellSet1D
    top: int = 0

    def nonempty(self) -> list[tuple[int, CellSet1D]]:
        return [(i, s) for i, s in sorted(self.strata.items()) if s]


def stratum_levels(S: CellSet1D, J: int, cfg: StructureConfig, top: int = 0) -> np.ndarray:
    """Per cell, the largest dyadic ``eta <= 2^-top`` (as exponent) with the
    cell in ``T_eta``; ``-1`` for cells in no ``T_eta``."""
    level = np.full(len(S), -1, dtype=np.int64)
    if not len(S):
        return level
    for i in cfg.levels(top):
        n_star = _topmost_qualifying(S, -i * cfg.C)
        in_T = np.array([Fraction(int(n)) <= J + i * cfg.C for n in n_star])
        newly = in_T & (level < 0)
        level[newly] = i
        if (level >= 0).all():
            break
    return level


def stratify_axis(S: CellSet1D, J: int, cfg: StructureConfig, top: int = 0) -> AxisStratification:
    """``S_eta = T_eta minus T_{2 eta}`` for dyadic ``eta`` in ``[eps_min, 2^-top]``,
    with ``S_top = T_top``.

    ``T_eta`` holds the points whose maximal interval (density threshold
    ``eta^C``) has length at least ``eta^C 2^-J``.
    """
    level = stratum_levels(S, J, cfg, top)
    strata = {i: CellSet1D(S.N, S.cells[level == i], S.domain) for i in cfg.levels(top)}
    residual = CellSet1D(S.N, S.cells[level < 0], S.domain)
    return AxisStratification(strata, residual, top)


# -- the three stages ----------------------------------------------------------


@dataclass(frozen=True)
class Stratum:
    """A piece of the stratification; ``label`` holds the exponents of
    ``(eta,)``, ``(eta, rho)`` or ``(eta, rho, delta)``."""

    label: tuple[int, ...]
    body: CellSet
    residual: bool = False

    @property
    def params(self) -> tuple[DyadicParam, ...]:
        return tuple(DyadicParam(i) for i in self.label)


def _sort_strata(strata: list[Stratum]) -> list[Stratum]:
    return sorted(strata, key=lambda s: (s.residual, s.label))


def stage1(part: CellSet, J: int, cfg: StructureConfig) -> list[Stratum]:
    """Columns of ``part`` grouped by the stratum of their projection."""
    if not part:
        return []
    strat = stratify_axis(project1(part), J, cfg)
    out = [Stratum((i,), part.select_columns(s.cells)) for i, s in strat.nonempty()]
    if strat.residual:
        out.append(Stratum((), part.select_columns(strat.residual.cells), residual=True))
    return _sort_strata(out)


def stage2(stratum: Stratum, J: int, cfg: StructureConfig) -> list[Stratum]:
    """Rows of a stage-1 stratum grouped by horizontal slice length.

    Row ``q`` belongs to ``U_rho`` for the largest dyadic ``rho <= eta`` with
    slice length ``>= rho^C 2^-J``; ``J`` is the parent's.
    """
    body = stratum.body
    if not body:
        return []
    (i_eta,) = stratum.label
    rows, counts = row_counts(body)
    level = np.full(len(rows), -1, dtype=np.int64)
    size = 1 << body.N
    for idx, c in enumerate(counts.tolist()):
        length = Fraction(c, size)
        for i in cfg.levels(i_eta):
            if _ge_pow2(length, -(i * cfg.C + J)):
                level[idx] = i
                break
    out = []
    for i in sorted(set(level.tolist()) - {-1}):
        out.append(Stratum((i_eta, i), body.select_rows(rows[level == i])))
    if (level < 0).any():
        out.append(Stratum((i_eta,), body.select_rows(rows[level < 0]), residual=True))
    return _sort_strata(out)


def stage3(stratum: Stratum, K: int, cfg: StructureConfig) -> list[Stratum]:
    """Rows of a stage-2 stratum grouped by the stratum of its vertical
    projection at scale ``K``, for ``delta <= rho``."""
    body = stratum.body
    if not body:
        return []
    i_eta, i_rho = stratum.label
    strat = stratify_axis(project2(body), K, cfg, top=i_rho)
    out = [Stratum((i_eta, i_rho, i), body.select_rows(s.cells)) for i, s in strat.nonempty()]
    if strat.residual:
        out.append(Stratum((i_eta, i_rho), body.select_rows(strat.residual.cells), residual=True))
    return _sort_strata(out)


def interval_cover(S: CellSet1D, J: int, eta: DyadicParam, cfg: StructureConfig) -> list[DyadicInterval]:
    """Scale-``J`` dyadic intervals covering ``S``; checks the
    ``A_cover * eta^(-2C)`` count bound."""
    if not S:
        return []
    if J > S.N:
        raise DomainError("cover scale finer than the resolution")
    cover = S.intervals(J)
    if len(cover) > count_bound(cfg, eta.i, 2):
        raise CoverBoundError(f"{len(cover)} intervals exceed the bound at eta=2^-{eta.i}")
    return cover


# -- tile cover ----------------------------------------------------------------


@dataclass(frozen=True)
class CoverEntry:
    tiles: list[Tile]
    residual: CellSet


@dataclass(frozen=True)
class TileCover:
    """Near-tile cover of one fibre part ``Omega(K)``.

    ``entries`` maps the exponent ``i`` of ``delta = 2^-i`` to the tiles of
    ``D_{J,K}`` and the cells ``Omega_delta`` they cover.  ``unresolved``
    holds cells that fall below ``eps_min`` at some stage.
    """

    J: int
    K: int
    N: int
    entries: dict[int, CoverEntry]
    unresolved: CellSet
    strata: tuple[Stratum, ...] = field(default=(), repr=False)

    def residual_union(self, min_delta: DyadicParam | None = None) -> CellSet:
        """Union of ``Omega_delta`` over ``delta >= min_delta`` (all when None)."""
        parts = [
            e.residual for i, e in self.entries.items() if min_delta is None or i <= min_delta.i
        ]
        return union_all(parts, self.N, self.unresolved.domain)

    def tile_counts(self) -> dict[int, int]:
        return {i: len(e.tiles) for i, e in sorted(self.entries.items())}

    def summary_rows(self) -> list[dict]:
        rows = []
        for i, e in sorted(self.entries.items()):
            rows.append(
                {
                    "delta": float(DyadicParam(i).value),
                    "tile_count": len(e.tiles),
                    "residual_measure": float(measure(e.residual)),
                }
            )
        return rows

    def to_json(self) -> dict:
        return {
            "J": self.J,
            "K": self.K,
            "resolution": self.N,
            "entries": [
                {
                    "delta_log2": -i,
                    "tiles": [t.as_list() for t in e.tiles],
                    "residual_cells": e.residual.cells.tolist(),
                }
                for i, e in sorted(self.entries.items())
            ],
            "unresolved_cells": self.unresolved.cells.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict, domain: str = "unit") -> "TileCover":
        N = int(obj["resolution"])
        entries = {}
        for e in obj["entries"]:
            tiles = [Tile.from_indices(*t) for t in e["tiles"]]
            entries[-int(e["delta_log2"])] = CoverEntry(tiles, CellSet(N, e["residual_cells"], domain))
        return cls(
            int(obj["J"]),
            int(obj["K"]),
            N,
            entries,
            CellSet(N, obj.get("unresolved_cells", []), domain),
        )


def summary_csv(rows: Iterable[dict], extra: dict | None = None) -> str:
    buf = io.StringIO()
    rows = list(rows)
    fields = (list(extra) if extra else []) + ["delta", "tile_count", "residual_measure"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**(extra or {}), **r})
    return buf.getvalue()


def tile_cover(part: CellSet, cfg: StructureConfig = StructureConfig(), K: int | None = None) -> TileCover:
    """Compose the three stages into a delta-indexed near-tile cover.

    ``Omega_delta`` is the union of ``Omega^3_{eta,rho,delta}`` over
    ``eta >= rho >= delta``; its tiles are products of the stage-1 cover of
    ``S_eta`` (scale ``J``) with the stage-3 cover of ``S'_delta`` (scale
    ``K``), keeping the tiles that meet the stratum.
    """
    N, domain = part.N, part.domain
    if not part:
        return TileCover(0, K or 0, N, {}, CellSet.empty(N, domain))
    J = choose_J(part)
    if K is None:
        K = count_bin(int(column_counts(part)[1].max()), N)
    strata_all: list[Stratum] = []
    unresolved = []
    tiles_by_delta: dict[int, set[Tile]] = {}
    cells_by_delta: dict[int, list[CellSet]] = {}

    S = project1(part)
    s1 = stage1(part, J, cfg)
    strat1 = stratify_axis(S, J, cfg)
    for st1 in s1:
        strata_all.append(st1)
        if st1.residual:
            unresolved.append(st1.body)
            continue
        (i_eta,) = st1.label
        cover1 = interval_cover(strat1.strata[i_eta], J, DyadicParam(i_eta), cfg)
        for st2 in stage2(st1, J, cfg):
            strata_all.append(st2)
            if st2.residual:
                unresolved.append(st2.body)
                continue
            i_rho = st2.label[1]
            strat3 = stratify_axis(project2(st2.body), K, cfg, top=i_rho)
            for st3 in stage3(st2, K, cfg):
                strata_all.append(st3)
                if st3.residual:
                    unresolved.append(st3.body)
                    continue
                i_delta = st3.label[2]
                cover3 = interval_cover(strat3.strata[i_delta], K, DyadicParam(i_delta), cfg)
                meeting = {(t.h.m, t.v.m) for t in st3.body.tiles_meeting(J, K)}
                chosen = tiles_by_delta.setdefault(i_delta, set())
                for I in cover1:
                    for L in cover3:
                        if (I.m, L.m) in meeting:
                            chosen.add(Tile(I, L))
                cells_by_delta.setdefault(i_delta, []).append(st3.body)

    entries = {}
    for i in sorted(cells_by_delta):
        tiles = sorted(tiles_by_delta[i])
        if len(tiles) > count_bound(cfg, i, 1):
            raise CoverBoundError(f"{len(tiles)} tiles exceed the bound at delta=2^-{i}")
        entries[i] = CoverEntry(tiles, union_all(cells_by_delta[i], N, domain))
    return TileCover(J, K, N, entries, union_all(unresolved, N, domain), tuple(strata_all))


def cover_part(fd: FiberDecomposition, cfg: StructureConfig = StructureConfig()) -> dict[int, TileCover]:
    return {K: tile_cover(part, cfg, K=K) for K, part in fd}


# -- invariant checks ----------------------------------------------------------


def is_partition(pieces: Iterable[CellSet], whole: CellSet) -> bool:
    """Pieces pairwise disjoint with union equal to ``whole``."""
    pieces = [p for p in pieces if len(p)]
    total = sum(len(p) for p in pieces)
    if total != len(whole):
        return False
    return union_all(pieces, whole.N, whole.domain) == whole


def cover_contains(cover: TileCover) -> bool:
    """Every residual cell lies in one of its entry's tiles."""
    for e in cover.entries.values():
        covered = CellSet.from_tiles(e.tiles, cover.N, e.residual.domain)
        if not e.residual.issubset(covered):
            return False
    return True


def size_bound_holds(sub: CellSet, tile: Tile, J: int, K: int) -> bool:
    """``|sub ∩ tile| <= min(2^-j, 2^-J) * min(2^-k, 2^-K)``."""
    lhs = measure(sub.restrict(tile))
    rhs = Fraction(1, 1 << max(tile.j, J)) * Fraction(1, 1 << max(tile.k, K))
    return lhs <= rhs


@dataclass(frozen=True)
class DensityViolation:
    eta: int
    interval: DyadicInterval
    mass: Fraction
    bound: Fraction
    regime: str


def density_bound_violations(
    S: CellSet1D, J: int, cfg: StructureConfig, *, const=4, variant: str = "stated"
) -> list[DensityViolation]:
    """Check the density bounds on every stratum ``S_eta`` of ``S``.

    ``variant="stated"``: for ``eta^C 2^-J <= |I| <= eta^-C 2^-J`` require
    ``|S_eta ∩ I| <= eta^C |I|``, and for ``eta^2C 2^-J < |I| < eta^C 2^-J``
    require ``|S_eta ∩ I| <= const * eta^2C 2^-J``.

    ``variant="construction"``: the bounds the construction guarantees for
    ``eta < 1``: ``|S ∩ I| < (2 eta)^C |I|`` whenever ``|I| >= (2 eta)^C 2^-J``
    and ``I`` meets ``S_eta``; and ``|S_eta ∩ I| <= 2^(2C+1) eta^2C 2^-J``
    below that.
    """
    C = cfg.C
    out = []
    strat = stratify_axis(S, J, cfg)
    N = S.N
    for i, Se in strat.nonempty():
        for n in range(0, N + 1):
            blocks, counts_e = Se.block_counts(n)
            length_log2 = Fraction(-n)
            if variant == "construction":
                if i == 0:
                    continue
                big = length_log2 >= -(i - 1) * C - J
                sblocks, scounts = S.block_counts(n)
                lookup = dict(zip(sblocks.tolist(), scounts.tolist()))
                for m, ce in zip(blocks.tolist(), counts_e.tolist()):
                    if big:
                        mass = Fraction(lookup[m], 1 << N)
                        bound = Fraction(1, 1 << n) * _pow2(-(i - 1) * C)
                        if not mass < bound:
                            out.append(DensityViolation(i, DyadicInterval(n, m), mass, bound, "upper"))
                    else:
                        mass = Fraction(ce, 1 << N)
                        bound = _pow2(2 * C + 1 - 2 * i * C - J)
                        if mass > bound:
                            out.append(DensityViolation(i, DyadicInterval(n, m), mass, bound, "lower"))
                continue
            in_upper = (length_log2 >= -i * C - J) and (length_log2 <= i * C - J)
            in_lower = (length_log2 > -2 * i * C - J) and (length_log2 < -i * C - J)
            for m, ce in zip(blocks.tolist(), counts_e.tolist()):
                mass = Fraction(ce, 1 << N)
                if in_upper:
                    bound = Fraction(1, 1 << n) * _pow2(-i * C)
                    if mass > bound:
                        out.append(DensityViolation(i, DyadicInterval(n, m), mass, bound, "upper"))
                elif in_lower:
                    bound = Fraction(const) * _pow2(-2 * i * C - J)
                    if mass > bound:
                        out.append(DensityViolation(i, DyadicInterval(n, m), mass, bound, "lower"))
    return out


def _pow2(e: Fraction) -> Fraction:
    e = Fraction(e)
    if e.denominator == 1:
        k = int(e)
        return Fraction(1 << k) if k >= 0 else Fraction(1, 1 << -k)
    return Fraction(2.0 ** float(e))


# -- epsilon estimate ----------------------------------------------------------


@dataclass(frozen=True)
class ProbeSpec:
    count: int = 8
    seed: int = 0
    keep: float = 0.5


def probe_family(part: CellSet, cover: TileCover | None, probes: ProbeSpec) -> list[tuple[str, CellSet]]:
    """Subsets of ``part`` used to estimate the sup over all subsets."""
    family: list[tuple[str, CellSet]] = [("whole", part)]
    if cover is not None:
        for st in cover.strata:
            if st.body:
                family.append((f"stratum{st.label}{'r' if st.residual else ''}", st.body))
        for i, e in sorted(cover.entries.items()):
            for t in e.tiles:
                sub = part.restrict(t)
                if sub:
                    family.append((f"tile{t.as_list()}", sub))
    rng = np.random.default_rng(probes.seed)
    for k in range(probes.count):
        keep = rng.random(len(part)) < probes.keep
        if keep.any():
            family.append((f"random{k}", CellSet(part.N, part.cells[keep], part.domain)))
    return family


def epsilon_class(
    fd: FiberDecomposition,
    e,
    probes: ProbeSpec,
    grid,
    cfg: StructureConfig = StructureConfig(),
    norm: Callable | None = None,
) -> dict[int, DyadicParam]:
    """Dyadic round-up of ``max ||E chi_sub||_2s / |Omega(K)|^(1/s')`` over the
    probe family of each nonempty part."""
    from .extension import Density, extension_norm

    norm = norm or (lambda A: extension_norm(Density(A), grid, 2 * e.s))
    out = {}
    for K, part in fd:
        if not part:
            continue
        cover = tile_cover(part, cfg, K=K)
        denom = float(measure(part)) ** float(1 / e.s_dual)
        best = max(norm(sub) / denom for _, sub in probe_family(part, cover, probes))
        out[K] = DyadicParam.round_up(best)
    return out
