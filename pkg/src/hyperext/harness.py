"""Experiment suites: exponent scans, decay fits, decoupling, necessity and
ratio sweeps.

Every bilinear quantity is computed from two fields sampled on one shared
grid, so the discrete Hölder and Cauchy--Schwarz inequalities hold exactly
up to rounding; each suite records the slack of every pair it evaluates.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .decomposition import (
    DyadicParam,
    FiberDecomposition,
    ProbeSpec,
    StructureConfig,
    TileCover,
    choose_J,
    fiber_slice,
    probe_family,
    tile_cover,
)
from .dyadic import (
    CellSet,
    DomainError,
    DyadicInterval,
    ExponentPair,
    Tile,
    bilinear_scaling_exponent,
    measure,
    union_all,
)
from .extension import (
    REFERENCE_GRID,
    Density,
    Field,
    SpacetimeGrid,
    extend,
    lp_norm,
    lp_power,
)

HOLDER_TOL = 1e-12


class SuiteFailure(AssertionError):
    """An acceptance-style assertion embedded in a suite did not hold."""


# -- result types --------------------------------------------------------------


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    residual: float

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual}


def log2_fit(x: Iterable[float], y: Iterable[float]) -> LinearFit:
    """Least squares line through ``(x, log2 y)``; needs three points."""
    x = np.asarray(list(x), dtype=np.float64)
    y = np.asarray(list(y), dtype=np.float64)
    if len(x) < 3 or len(np.unique(x)) < 2:
        raise DomainError("a fit needs at least three rows with distinct abscissae")
    if np.any(y <= 0):
        raise DomainError("log fit of nonpositive values")
    ly = np.log2(y)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return LinearFit(float(coef[0]), float(coef[1]), res)


@dataclass
class ScanResult:
    """Rows of ``(parameters, norm, normalized)`` and a fit of
    ``log2(normalized)`` against ``x``."""

    param_names: tuple[str, ...]
    rows: list[tuple[tuple, float, float]]
    x: list[float]
    fit: LinearFit
    expected_slope: float | None = None
    holder_slacks: list[float] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.rows) < 3:
            raise DomainError("a scan needs at least three rows")

    @property
    def normalized(self) -> list[float]:
        return [r[2] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.param_names, "x", "norm", "normalized", "log2_normalized"])
        for (params, norm, val), x in zip(self.rows, self.x):
            w.writerow([*params, repr(x), repr(norm), repr(val), repr(math.log2(val))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "param_names": list(self.param_names),
            "rows": [
                {"params": list(p), "x": x, "norm": n, "normalized": v}
                for (p, n, v), x in zip(self.rows, self.x)
            ],
            "fit": self.fit.as_dict(),
            "expected_slope": self.expected_slope,
            "min_holder_slack": min(self.holder_slacks) if self.holder_slacks else None,
            **self.extras,
        }


@dataclass
class DecayFit:
    c0_hat: float
    pairs: list[tuple[int, int, int, int, float, float]]
    fit: LinearFit
    monotone_run: int
    holder_slacks: list[float] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.pairs:
            raise DomainError("a decay fit needs pairs")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["K", "K_prime", "J", "J_prime", "lhs", "rhs", "normalized"])
        for K, Kp, J, Jp, lhs, rhs in self.pairs:
            w.writerow([K, Kp, J, Jp, repr(lhs), repr(rhs), repr(lhs / rhs)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "c0_hat": self.c0_hat,
            "fit": self.fit.as_dict(),
            "monotone_run": self.monotone_run,
            "pairs": [
                dict(zip(["K", "K_prime", "J", "J_prime", "lhs", "rhs"], p)) for p in self.pairs
            ],
            "min_holder_slack": min(self.holder_slacks) if self.holder_slacks else None,
            **self.extras,
        }


@dataclass
class SuiteReport:
    cases: list[tuple[str, float]]
    reference_ratio: float
    diagnostics: list[dict] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return max((r for _, r in self.cases), default=0.0)

    @property
    def relative_max(self) -> float:
        return self.max_ratio / self.reference_ratio

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "ratio", "relative"])
        for name, r in self.cases:
            w.writerow([name, repr(r), repr(r / self.reference_ratio)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "cases": [{"case": n, "ratio": r} for n, r in self.cases],
            "max_ratio": self.max_ratio,
            "reference_ratio": self.reference_ratio,
            "relative_max": self.relative_max,
            "diagnostics": self.diagnostics,
            **self.extras,
        }


# -- shared helpers ------------------------------------------------------------


def box(N: int, h: tuple, v: tuple, domain: str = "unit") -> CellSet:
    """Cells of the rectangle ``[h0, h1] x [v0, v1]`` (endpoints on the
    resolution-``N`` lattice)."""
    size = 1 << N
    ends = []
    for a in (*h, *v):
        x = Fraction(a) * size
        if x.denominator != 1:
            raise DomainError(f"endpoint {a} is not on the 2^-{N} lattice")
        ends.append(int(x))
    p0, p1, q0, q1 = ends
    if p1 <= p0 or q1 <= q0:
        return CellSet.empty(N, domain)
    P, Q = np.meshgrid(np.arange(p0, p1), np.arange(q0, q1), indexing="ij")
    return CellSet(N, np.stack([P.ravel(), Q.ravel()], axis=1), domain)


def holder_slack(F: Field, G: Field, s) -> float:
    """Relative slack of ``||F G||_s <= ||F||_2s ||G||_2s``."""
    lhs = lp_norm(F * G, s)
    rhs = lp_norm(F, 2 * s) * lp_norm(G, 2 * s)
    return (rhs - lhs) / rhs if rhs > 0 else 0.0


def _fields(sets: Iterable[Density], grid: SpacetimeGrid) -> list[Field]:
    return [extend(f, grid) for f in sets]


def monotone_run(values: list[float], increasing: bool) -> int:
    """Length of the longest run of consecutive strictly monotone values."""
    if not values:
        return 0
    best = cur = 1
    for a, b in zip(values, values[1:]):
        ok = b > a if increasing else b < a
        cur = cur + 1 if ok else 1
        best = max(best, cur)
    return best


# -- slabs ---------------------------------------------------------------------


def slab_decompose(tau: CellSet, axis: int, kmax: int, centered: bool = True) -> list[tuple[int, CellSet]]:
    """Bands ``|xi_axis| in (2^-k-1, 2^-k]`` for ``k = 0..kmax``.

    ``tau`` lives on the signed domain; with ``centered`` the line
    ``xi_axis = 0`` must be its centre line.  The part with
    ``|xi_axis| <= 2^-kmax-1`` is left out.
    """
    if axis not in (1, 2):
        raise DomainError("axis must be 1 or 2")
    if tau.domain != "signed":
        raise DomainError("slabs are taken on the signed domain")
    N = tau.N
    if not 0 <= kmax <= N - 1:
        raise DomainError(f"kmax must lie in [0, {N - 1}]")
    c = tau.cells[:, axis - 1]
    if centered:
        if not len(tau):
            raise DomainError("an empty set has no centre line")
        mirrored = tau.cells.copy()
        mirrored[:, axis - 1] = -c - 1
        if CellSet(N, mirrored, "signed") != tau:
            raise DomainError(f"axis {axis} is not the centre line of the set")
    # |xi| of a cell is [a, a + 1] 2^-N with a = c for c >= 0 and -c - 1 otherwise
    a = np.where(c >= 0, c, -c - 1)
    out = []
    for k in range(kmax + 1):
        lo, hi = 1 << (N - k - 1), 1 << (N - k)
        keep = (a >= lo) & (a + 1 <= hi)
        out.append((k, CellSet(N, tau.cells[keep], "signed")))
    return out


def low_slab_count(tau_prime: CellSet, J_prime: int) -> int:
    """Number of nonempty bands ``|xi_1| ~ 2^-j`` with ``j <= J'``."""
    kmax = min(J_prime, tau_prime.N - 1)
    return sum(1 for _, s in slab_decompose(tau_prime, 1, kmax, centered=False) if s)


# -- single-tile reference -------------------------------------------------------


@dataclass(frozen=True)
class TileReference:
    tile: Tile
    ratio: float
    table: tuple[tuple[tuple[int, int, int, int], float], ...]

    def as_dict(self) -> dict:
        return {
            "tile": self.tile.as_list(),
            "ratio": self.ratio,
            "table": [{"tile": list(t), "ratio": r} for t, r in self.table],
        }


def tile_candidates(N: int, measure_log2: int | None = None, positions: str = "anchored") -> list[Tile]:
    """Tiles of the unit square at scales ``<= N``.

    ``positions="anchored"`` keeps the tile at the origin of each shape;
    ``"all"`` enumerates every position.  ``measure_log2 = -n`` restricts to
    tiles of area ``2^-n``.
    """
    if positions not in ("anchored", "all"):
        raise DomainError(f"unknown positions {positions!r}")
    out = []
    for j in range(N + 1):
        for k in range(N + 1):
            if measure_log2 is not None and j + k != -measure_log2:
                continue
            ms = range(1 << j) if positions == "all" else [0]
            mv = range(1 << k) if positions == "all" else [0]
            for a in ms:
                for b in mv:
                    out.append(Tile.from_indices(j, a, k, b))
    return out


def exhaustive_tile_reference(
    N: int,
    e: ExponentPair,
    grid: SpacetimeGrid = REFERENCE_GRID,
    measure_log2: int | None = None,
    positions: str = "anchored",
) -> TileReference:
    """Best restricted-type ratio over single tiles on ``grid``."""
    from .extension import ratio

    table = []
    for t in tile_candidates(N, measure_log2, positions):
        table.append(((t.j, t.h.m, t.k, t.v.m), ratio(t.cells(N), e, grid)))
    if not table:
        raise DomainError("no tile matches the requested measure")
    key, best = max(table, key=lambda kv: kv[1])
    return TileReference(Tile.from_indices(*key), best, tuple(table))


# -- constant fibre ------------------------------------------------------------


def verify_constant_fiber(
    fd: FiberDecomposition,
    e: ExponentPair,
    grid: SpacetimeGrid = REFERENCE_GRID,
    probes: ProbeSpec = ProbeSpec(),
    cfg: StructureConfig = StructureConfig(),
    reference: float | None = None,
) -> SuiteReport:
    """``||E chi_sub||_2s / |Omega(K)|^(1/s')`` over probe subsets of each part.

    Probe subsets are strata, cover tiles and random subsets; duplicates are
    evaluated once.  Without ``reference`` the anchored single-tile
    reference at the source resolution is used.
    """
    cases = []
    diagnostics = []
    for K, part in fd:
        if not part:
            continue
        cover = tile_cover(part, cfg, K=K)
        denom = float(measure(part)) ** float(1 / e.s_dual)
        seen: set[CellSet] = set()
        for name, sub in probe_family(part, cover, probes):
            if sub in seen:
                continue
            seen.add(sub)
            norm = lp_norm(extend(Density(sub), grid), 2 * e.s)
            cases.append((f"K={K}:{name}", norm / denom))
        diagnostics.append({"K": K, "J": cover.J, "probes": len(seen), "tile_counts": cover.tile_counts()})
    if reference is None:
        reference = exhaustive_tile_reference(fd.source.N, e, grid).ratio
    return SuiteReport(cases, reference, diagnostics)


# -- bilinear exponent scan ------------------------------------------------------


def separated_pair(j: int, k: int, n0: int) -> tuple[Density, Density]:
    """Tiles ``[0, 2^-j] x [0, 2^-k]`` and its neighbour at distance
    ``(2^-j, 2^-k)`` towards the negative quadrant, on the signed domain with
    quadrature nodes ``(j + n0, k + n0)``."""
    if j < 1 or k < 1:
        raise DomainError("separated pairs need j, k >= 1 to fit in [-1, 1]^2")
    N = max(j, k) + n0
    tj, tk = Fraction(1, 1 << j), Fraction(1, 1 << k)
    a = box(N, (0, tj), (0, tk), "signed")
    b = box(N, (-2 * tj, -tj), (-2 * tk, -tk), "signed")
    nodes = (j + n0, k + n0)
    return Density(a, nodes=nodes), Density(b, nodes=nodes)


def default_scan_range(lo: int = 2, hi: int = 8) -> list[tuple[int, int]]:
    """``(ceil(n/2), floor(n/2))`` for ``n = lo..hi``."""
    return [((n + 1) // 2, n // 2) for n in range(lo, hi + 1)]


def _pair_value(j, k, n0, grid, e):
    f, g = separated_pair(j, k, n0)
    F, G = _fields([f, g], grid)
    norm = lp_norm(F * G, e.s)
    area = float(measure(f.support)) * float(measure(g.support))
    return norm, norm / area ** float(1 / e.r), holder_slack(F, G, e.s)


def refined(grid: SpacetimeGrid) -> SpacetimeGrid:
    """Same box, twice the samples per axis."""
    return SpacetimeGrid(grid.R_t, grid.R_x, 2 * grid.M_t, 2 * grid.M_x, grid.R_x2, 2 * grid.M_x2)


def scan_bilinear_exponent(
    e: ExponentPair,
    range_: list[tuple[int, int]] | None = None,
    grid: SpacetimeGrid = REFERENCE_GRID,
    n0: int = 3,
    mode: str = "matched",
    cross_check: bool = True,
) -> ScanResult:
    """``log2 ||E chi_tau E chi_tau'||_s / (|tau||tau'|)^(1/r)`` against ``j + k``.

    ``mode="matched"`` samples row ``(j, k)`` on ``grid.rescaled(j, k)``, the
    lattice the rescaling maps the unit-scale box onto; ``"fixed"`` keeps
    ``grid`` for every row, so truncation enters the fit.  The cross check
    repeats the scan with twice the samples per axis and one more node level.
    """
    if mode not in ("matched", "fixed"):
        raise DomainError(f"unknown scan mode {mode!r}")
    range_ = default_scan_range() if range_ is None else [tuple(p) for p in range_]
    if len({j + k for j, k in range_}) < 3:
        raise DomainError("the scan range needs at least three distinct j + k")

    def run(base, nodes):
        rows, slacks = [], []
        for j, k in range_:
            g = base.rescaled(j, k) if mode == "matched" else base
            norm, val, slack = _pair_value(j, k, nodes, g, e)
            rows.append(((j, k), norm, val))
            slacks.append(slack)
        return rows, slacks

    rows, slacks = run(grid, n0)
    x = [float(j + k) for j, k in range_]
    fit = log2_fit(x, [r[2] for r in rows])
    extras = {"mode": mode, "grid": grid.as_dict(), "nodes_extra": n0, "exponents": e.as_dict()}
    if cross_check:
        rows2, slacks2 = run(refined(grid), n0 + 1)
        fit2 = log2_fit(x, [r[2] for r in rows2])
        extras["cross_check"] = {
            "grid": refined(grid).as_dict(),
            "slope": fit2.slope,
            "slope_difference": abs(fit2.slope - fit.slope),
            "max_row_rel_diff": max(abs(a[2] - b[2]) / a[2] for a, b in zip(rows, rows2)),
        }
        slacks += slacks2
    expected = -float(bilinear_scaling_exponent(e))
    return ScanResult(("j", "k"), rows, x, fit, expected, slacks, extras)


# -- decay constant -------------------------------------------------------------


@dataclass(frozen=True)
class DecayPair:
    """Covers of ``Omega(K)`` and ``Omega(K')`` with the cell shift that
    centres them, and the enlargement of the time box for this pair."""

    cover: TileCover
    cover_prime: TileCover
    shift: tuple[int, int]
    time_scale: int = 0

    @property
    def gap(self) -> int:
        return abs(self.cover.K - self.cover_prime.K)

    @property
    def hard_case(self) -> bool:
        a, b = self.cover, self.cover_prime
        return (a.K < b.K and a.J > b.J) or (a.K > b.K and a.J < b.J)


def _part_of(cover: TileCover) -> CellSet:
    return union_all([cover.residual_union(), cover.unresolved], cover.N, cover.unresolved.domain)


def cross_pairs(gaps: Iterable[int] = range(1, 6), N: int = 8, cfg: StructureConfig = StructureConfig()) -> list[DecayPair]:
    """Synthetic hard-case pairs: a cross made of a tall strip of width
    ``2^-g`` and a wide strip of height ``2^-g`` through the centre of the
    unit square.  Its fibre parts are ``Omega(0)`` (the tall strip, ``J = g``)
    and ``Omega(g)`` (the wide strip minus the tall one's columns, ``J' = 0``
    for ``g >= 2``; at ``g = 1`` its projection has measure 1/2, so ``J' = 1``).
    """
    out = []
    half = Fraction(1, 2)
    for g in gaps:
        if not 1 <= g < N:
            raise DomainError(f"gap {g} needs 1 <= g < N")
        w = Fraction(1, 1 << (g + 1))
        tall = box(N, (half - w, half + w), (0, 1))
        wide = box(N, (0, 1), (half - w, half + w)).difference(tall)
        fd = fiber_slice(tall.union(wide))
        covers = [tile_cover(part, cfg, K=K) for K, part in fd]
        if len(covers) != 2:
            raise AssertionError(f"cross at gap {g} has {len(covers)} fibre parts")
        c = 1 << (N - 1)
        out.append(DecayPair(covers[0], covers[1], (-c, -c), g))
    return out


def _centered(A: CellSet, shift) -> CellSet:
    return A.shifted(shift[0], shift[1], "signed")


def fit_decay_c0(
    pairs: list[DecayPair],
    delta: DyadicParam = DyadicParam(2),
    e: ExponentPair = ExponentPair(Fraction(7, 4), Fraction(2)),
    grid: SpacetimeGrid = SpacetimeGrid(4.0, 4.0, 16, 16),
    same_j: Iterable[int] = (),
) -> DecayFit:
    """Fit ``||E chi_{Omega_d(K)} E chi_{Omega_d(K')}||_s / max(|Omega(K)|, |Omega(K')|)^(2/s')
    ~ 2^(-c0 |K - K'|)`` over hard-case pairs.

    ``Omega_d(K)`` is the union of the cover entries with ``delta' >= delta``.
    Each pair is evaluated after centring, on ``grid`` with the time box
    enlarged by ``2^time_scale`` at fixed spacing.  ``same_j`` lists gaps for
    the equal-``J`` comparison against the factor ``2^(-g/s')``.
    """
    hard = [p for p in pairs if p.hard_case]
    skipped = [(p.cover.K, p.cover_prime.K, p.cover.J, p.cover_prime.J) for p in pairs if not p.hard_case]
    if not hard:
        raise DomainError("no hard-case pairs (K < K' with J > J')")
    rows, slacks, slab_counts = [], [], []
    for p in sorted(hard, key=lambda p: p.gap):
        a, b = (p.cover, p.cover_prime) if p.cover.K < p.cover_prime.K else (p.cover_prime, p.cover)
        A = _centered(a.residual_union(delta), p.shift)
        B = _centered(b.residual_union(delta), p.shift)
        g = grid.scaled(kt=p.time_scale)
        if not A or not B:
            continue
        F, G = _fields([Density(A), Density(B)], g)
        lhs = lp_norm(F * G, e.s)
        slacks.append(holder_slack(F, G, e.s))
        rhs = float(max(measure(_part_of(a)), measure(_part_of(b)))) ** (2 / float(e.s_dual))
        rows.append((a.K, b.K, a.J, b.J, lhs, rhs))
        for i, entry in b.entries.items():
            if i <= delta.i:
                for t in entry.tiles:
                    cnt = low_slab_count(_centered(t.cells(b.N), p.shift), b.J)
                    slab_counts.append(cnt)
    if len(rows) < 3:
        raise DomainError("a decay fit needs at least three evaluated pairs")
    gaps = [abs(r[1] - r[0]) for r in rows]
    normalized = [r[4] / r[5] for r in rows]
    fit = log2_fit(gaps, normalized)
    extras = {
        "delta_log2": -delta.i,
        "grid": grid.as_dict(),
        "exponents": e.as_dict(),
        "max_low_slab_count": max(slab_counts, default=0),
        "skipped_not_hard": [list(t) for t in skipped],
    }
    if same_j:
        extras["same_j"] = same_j_check(list(same_j), e, grid)
    return DecayFit(-fit.slope, rows, fit, monotone_run(normalized, increasing=False), slacks, extras)


def same_j_check(gaps: list[int], e: ExponentPair, grid: SpacetimeGrid, N: int = 8) -> list[dict]:
    """Equal-``J`` pairs: the unit square and ``[0, 1] x [0, 2^-g]``.

    Cauchy--Schwarz gives ``rho(tau) rho(tau') 2^(-g/s')`` for the normalized
    product; the measured factor ``rho(tau') / rho(tau)`` is compared with 1.
    The flat strip is evaluated on a box enlarged by ``2^g`` in ``t`` and
    ``x_2`` at the same spacing.
    """
    out = []
    c = 1 << (N - 1)
    sq = _centered(box(N, (0, 1), (0, 1)), (-c, -c))
    rho_sq = lp_norm(extend(Density(sq), grid), 2 * e.s)
    for g in gaps:
        h = Fraction(1, 1 << g)
        flat = box(N, (0, 1), (Fraction(1, 2) - h / 2, Fraction(1, 2) + h / 2))
        flat = _centered(flat, (-c, -c))
        gg = grid.scaled(kt=g, k2=g)
        rho_flat = lp_norm(extend(Density(flat), gg), 2 * e.s) / float(h) ** float(1 / e.s_dual)
        measured = rho_sq * rho_flat * 2.0 ** (-g / float(e.s_dual))
        predicted = rho_sq**2 * 2.0 ** (-g / float(e.s_dual))
        out.append({"gap": g, "measured": measured, "predicted": predicted, "factor": measured / predicted})
    return out


# -- decoupling -----------------------------------------------------------------


@dataclass
class DecouplingReport:
    keys: list[int]
    L: float
    D: float
    off_diagonal: float
    bound: float
    slack: float
    holder_slacks: list[float]
    quadruples: int

    @property
    def holds(self) -> bool:
        return self.L <= self.bound

    def to_json(self) -> dict:
        return {
            "keys": self.keys,
            "L": self.L,
            "D": self.D,
            "off_diagonal": self.off_diagonal,
            "bound": self.bound,
            "slack": self.slack,
            "holds": self.holds,
            "exact_split_slack": (self.D + self.off_diagonal - self.L) / self.L if self.L else 0.0,
            "quadruples": self.quadruples,
            "min_holder_slack": min(self.holder_slacks) if self.holder_slacks else None,
        }


def check_decoupling(
    family: Mapping[int, CellSet],
    delta: DyadicParam,
    e: ExponentPair,
    grid: SpacetimeGrid = REFERENCE_GRID,
    A: int = 4,
) -> DecouplingReport:
    """``L = ||sum_K E chi_K||_2s^2s`` against the diagonal ``D`` and the
    off-diagonal quadrilinear terms over ordered quadruples with at least two
    distinct keys.

    Pointwise ``|sum F|^2s <= sum_quadruples |F1 F2 F3 F4|^(s/2)`` because
    ``s/2 < 1``, so ``L <= D + off`` holds exactly; each quadruple also obeys
    ``||F1 F2 F3 F4||_(s/2) <= ||F1 F2||_s ||F3 F4||_s``.
    """
    keys = sorted(family)
    if not keys:
        raise DomainError("empty family")
    sep = A * math.log2(1 / float(delta))
    for a, b in zip(keys, keys[1:]):
        if b - a < sep:
            raise DomainError(f"keys {a} and {b} are closer than A log2(1/delta) = {sep}")
    p = 2 * e.s
    fields = {K: extend(Density(family[K]), grid) for K in keys}
    total = fields[keys[0]]
    for K in keys[1:]:
        total = total + fields[K]
    L = lp_power(total, p)
    D = sum(lp_power(fields[K], p) for K in keys)
    off = 0.0
    slacks = []
    count = 0
    q = e.s / 2
    for quad in itertools.product(keys, repeat=4):
        if len(set(quad)) < 2:
            continue
        F = [fields[K] for K in quad]
        prod4 = F[0] * F[1] * F[2] * F[3]
        off += lp_power(prod4, q, quasi=True)
        lhs = lp_norm(prod4, q, quasi=True)
        rhs = lp_norm(F[0] * F[1], e.s) * lp_norm(F[2] * F[3], e.s)
        slacks.append((rhs - lhs) / rhs if rhs > 0 else 0.0)
        count += 1
    union = union_all([family[K] for K in keys], family[keys[0]].N, family[keys[0]].domain)
    log_term = math.log2(1 / float(delta)) ** 2
    bound = log_term * D + float(delta) * float(measure(union)) ** float(p / e.s_dual)
    return DecouplingReport(keys, L, D, off, bound, (bound - L) / bound if bound else 0.0, slacks, count)


def distant_tiles(N: int = 8, K: tuple[int, int] = (0, 8)) -> dict[int, CellSet]:
    """A tall tile of fibre length ``2^-K0`` and a flat one of fibre length
    ``2^-K1``, side by side in the unit square."""
    a = box(N, (0, Fraction(1, 4)), (0, Fraction(1, 1 << K[0])))
    b = box(N, (Fraction(1, 2), 1), (0, Fraction(1, 1 << K[1])))
    return {K[0]: a, K[1]: b}


# -- necessity ------------------------------------------------------------------


def necessity_experiment(
    depth: int,
    e: ExponentPair = ExponentPair(Fraction(8, 5), Fraction(1)),
    grid: SpacetimeGrid = SpacetimeGrid(4.0, 4.0, 16, 16),
    n0: int = 5,
    control: bool = False,
    cross_check: bool = True,
) -> ScanResult:
    """``||E f+ E f-||_s / (||f+||_2 ||f-||_2)`` for boxes of height ``2^-m``
    near ``(1, 0)`` and ``(-1, 0)``, ``m = 0..depth``.

    Level ``m`` uses ``grid`` with the ``t`` and ``x_2`` boxes enlarged by
    ``2^m`` at the same spacing.  With ``control`` the left box moves down to
    ``xi_2 in [-1/2, -1/2 + 2^-m]``, adding vertical separation.
    """
    if depth < 2:
        raise DomainError("depth must be at least 2 for a trend")

    def run(base, nodes):
        rows, slacks = [], []
        for m in range(depth + 1):
            N = m + nodes
            hm = Fraction(1, 1 << m)
            fp = box(N, (Fraction(1, 2), 1), (0, hm), "signed")
            v0 = -Fraction(1, 2) if control else Fraction(0)
            fm = box(N, (-1, -Fraction(1, 2)), (v0, v0 + hm), "signed")
            f, g = Density(fp, nodes=(nodes, N)), Density(fm, nodes=(nodes, N))
            F, G = _fields([f, g], base.scaled(kt=m, k2=m))
            norm = lp_norm(F * G, e.s)
            rows.append(((m,), norm, norm / (f.l2_norm() * g.l2_norm())))
            slacks.append(holder_slack(F, G, e.s))
        return rows, slacks

    rows, slacks = run(grid, n0)
    x = [float(m) for m in range(depth + 1)]
    vals = [r[2] for r in rows]
    fit = log2_fit(x, vals)
    extras = {
        "control": control,
        "grid": grid.as_dict(),
        "nodes": n0,
        "exponents": e.as_dict(),
        "growth": [v / vals[0] for v in vals],
        "monotone_run": monotone_run(vals, increasing=True),
    }
    if cross_check:
        rows2, slacks2 = run(refined(grid), n0 + 1)
        extras["cross_check"] = {
            "grid": refined(grid).as_dict(),
            "max_row_rel_diff": max(abs(a[2] - b[2]) / a[2] for a, b in zip(rows, rows2)),
        }
        slacks += slacks2
    return ScanResult(("m",), rows, x, fit, 2 / float(e.s) - 1, slacks, extras)


# -- generators and the main sweep ------------------------------------------------

GENERATORS = ("random-cells", "random-tile-unions", "cantor", "staircase", "single-tile")


def random_cells(rng: np.random.Generator, N: int) -> CellSet:
    """Independent cells with a density drawn per set."""
    p = rng.choice([0.02, 0.1, 0.3, 0.6, 0.9])
    mask = rng.random((1 << N, 1 << N)) < p
    if not mask.any():
        mask[rng.integers(1 << N), rng.integers(1 << N)] = True
    return CellSet.from_mask(mask, N)


def random_tile_union(rng: np.random.Generator, N: int, max_tiles: int = 6) -> CellSet:
    tiles = []
    for _ in range(int(rng.integers(1, max_tiles + 1))):
        j, k = (int(v) for v in rng.integers(0, N + 1, size=2))
        tiles.append(Tile.from_indices(j, int(rng.integers(1 << j)), k, int(rng.integers(1 << k))))
    return CellSet.from_tiles(tiles, N)


def cantor_1d(N: int, generations: int) -> np.ndarray:
    """Dyadic Cantor set keeping the outer quarters at each generation."""
    if 2 * generations > N:
        raise DomainError(f"{generations} generations need N >= {2 * generations}")
    starts = np.array([0], dtype=np.int64)
    size = 1 << N
    for _ in range(generations):
        size //= 4
        starts = np.concatenate([starts, starts + 3 * size])
        starts.sort()
    return np.concatenate([np.arange(s, s + size) for s in starts])


def cantor(N: int, generations: int = 3) -> CellSet:
    c = cantor_1d(N, generations)
    P, Q = np.meshgrid(c, c, indexing="ij")
    return CellSet(N, np.stack([P.ravel(), Q.ravel()], axis=1))


def staircase(rng: np.random.Generator | None, N: int, steps: int | None = None) -> CellSet:
    """Columns ``p`` filled up to a nonincreasing step height."""
    size = 1 << N
    if steps is None:
        steps = int(rng.integers(2, N + 1)) if rng is not None else N
    mask = np.zeros((size, size), dtype=bool)
    edges = np.linspace(0, size, steps + 1).astype(int)
    for s in range(steps):
        mask[edges[s] : edges[s + 1], : max(1, size >> s)] = True
    return CellSet.from_mask(mask, N)


def generate(gen: str, rng: np.random.Generator, N: int) -> CellSet:
    if gen == "random-cells":
        return random_cells(rng, N)
    if gen == "random-tile-unions":
        return random_tile_union(rng, N)
    if gen == "cantor":
        return cantor(N, int(rng.integers(1, min(3, N // 2) + 1)))
    if gen == "staircase":
        return staircase(rng, N)
    if gen == "single-tile":
        return CellSet.full(N)
    raise DomainError(f"unknown generator {gen!r}; expected one of {GENERATORS}")


def pipeline_diagnostics(omega: CellSet, cfg: StructureConfig = StructureConfig()) -> dict:
    fd = fiber_slice(omega)
    counts = Counter()
    parts = {}
    for K, part in fd:
        cover = tile_cover(part, cfg, K=K)
        parts[K] = {"J": cover.J, "measure": float(measure(part)), "tile_counts": cover.tile_counts()}
        for i, c in cover.tile_counts().items():
            counts[i] += c
    return {"parts": len(parts), "by_K": parts, "tiles_by_delta_log2": {-i: c for i, c in sorted(counts.items())}}


def main_ratio_sweep(
    gen: str | list[str],
    count: int,
    seed: int,
    e: ExponentPair,
    grid: SpacetimeGrid = REFERENCE_GRID,
    N: int = 6,
    reference: TileReference | None = None,
    cfg: StructureConfig = StructureConfig(),
    diagnostics: bool = True,
) -> SuiteReport:
    """Ratios of generated sets against the best single tile.

    A list of generators is cycled through; each set draws from one seeded
    stream, so the suite is reproducible from ``seed``.
    """
    gens = [gen] if isinstance(gen, str) else list(gen)
    for g in gens:
        if g not in GENERATORS:
            raise DomainError(f"unknown generator {g!r}; expected one of {GENERATORS}")
    from .extension import ratio

    rng = np.random.default_rng(seed)
    ref = reference or exhaustive_tile_reference(N, e, grid)
    cases, diags = [], []
    for i in range(count):
        g = gens[i % len(gens)]
        omega = generate(g, rng, N)
        cases.append((f"{g}#{i}", ratio(omega, e, grid)))
        if diagnostics:
            diags.append({"case": f"{g}#{i}", "cells": len(omega), **pipeline_diagnostics(omega, cfg)})
    extras = {
        "generators": gens,
        "seed": seed,
        "resolution": N,
        "grid": grid.as_dict(),
        "exponents": e.as_dict(),
        "reference_tile": ref.tile.as_list(),
    }
    return SuiteReport(cases, ref.ratio, diags, extras)
