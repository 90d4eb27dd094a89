"""Simulated annealing over disjoint unions of dyadic tiles.

The objective is the restricted-type ratio.  Moves preserve the total
measure exactly: halving a tile and relocating one half, merging sibling
tiles, stepping a tile to a neighbouring position of its own shape, and
trading a factor of two between the tile's sides.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dyadic import CellSet, DomainError, DyadicInterval, ExponentPair, Tile
from .extension import REFERENCE_GRID, SpacetimeGrid, ratio

MOVE_KINDS = ("halve", "merge", "translate", "aspect")


def _overlap(a: DyadicInterval, b: DyadicInterval) -> bool:
    # dyadic intervals overlap iff one contains the other
    if a.n <= b.n:
        return (b.m >> (b.n - a.n)) == a.m
    return (a.m >> (a.n - b.n)) == b.m


def tiles_overlap(s: Tile, t: Tile) -> bool:
    return _overlap(s.h, t.h) and _overlap(s.v, t.v)


@dataclass(frozen=True)
class Configuration:
    """Disjoint tiles at resolution ``N`` with total area ``budget``."""

    tiles: tuple[Tile, ...]
    N: int
    budget: Fraction

    def __post_init__(self):
        tiles = tuple(sorted(self.tiles))
        object.__setattr__(self, "tiles", tiles)
        object.__setattr__(self, "budget", Fraction(self.budget))
        for t in tiles:
            if t.j > self.N or t.k > self.N:
                raise DomainError(f"tile {t.as_list()} is finer than resolution {self.N}")
        for a in range(len(tiles)):
            for b in range(a + 1, len(tiles)):
                if tiles_overlap(tiles[a], tiles[b]):
                    raise DomainError(f"tiles {tiles[a].as_list()} and {tiles[b].as_list()} overlap")
        if sum((t.area for t in tiles), Fraction(0)) != self.budget:
            raise DomainError("tile areas do not add up to the budget")

    @property
    def cells(self) -> CellSet:
        return CellSet.from_tiles(self.tiles, self.N)

    def key(self) -> tuple:
        return tuple(tuple(t.as_list()) for t in self.tiles)

    def to_json(self) -> dict:
        return {
            "resolution": self.N,
            "budget": str(self.budget),
            "tiles": [t.as_list() for t in self.tiles],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Configuration":
        return cls(tuple(Tile.from_indices(*t) for t in obj["tiles"]), int(obj["resolution"]), Fraction(obj["budget"]))


def _tile(j: int, a: int, k: int, b: int, N: int) -> Tile | None:
    """The tile, or None when it leaves the unit square or the resolution."""
    if 0 <= j <= N and 0 <= k <= N and 0 <= a < (1 << j) and 0 <= b < (1 << k):
        return Tile.from_indices(j, a, k, b)
    return None


def _free(t: Tile, others) -> bool:
    return not any(tiles_overlap(t, o) for o in others)


def _neighbors_halve(c: Configuration) -> list[Configuration]:
    out = []
    for idx, t in enumerate(c.tiles):
        rest = c.tiles[:idx] + c.tiles[idx + 1 :]
        halves = []
        if t.j < c.N:
            halves.append([Tile.from_indices(t.j + 1, 2 * t.h.m + d, t.k, t.v.m) for d in (0, 1)])
        if t.k < c.N:
            halves.append([Tile.from_indices(t.j, t.h.m, t.k + 1, 2 * t.v.m + d) for d in (0, 1)])
        for pair in halves:
            for keep, move in (pair, pair[::-1]):
                j, k = move.j, move.k
                occupied = rest + (keep,)
                for a in range(1 << j):
                    for b in range(1 << k):
                        cand = Tile.from_indices(j, a, k, b)
                        if cand == move or not _free(cand, occupied):
                            continue
                        out.append(Configuration(occupied + (cand,), c.N, c.budget))
    return out


def _neighbors_merge(c: Configuration) -> list[Configuration]:
    out = []
    tiles = c.tiles
    for a in range(len(tiles)):
        for b in range(a + 1, len(tiles)):
            s, t = tiles[a], tiles[b]
            if s.j != t.j or s.k != t.k:
                continue
            merged = None
            if s.v.m == t.v.m and s.h.m >> 1 == t.h.m >> 1 and s.j > 0:
                merged = Tile.from_indices(s.j - 1, s.h.m >> 1, s.k, s.v.m)
            elif s.h.m == t.h.m and s.v.m >> 1 == t.v.m >> 1 and s.k > 0:
                merged = Tile.from_indices(s.j, s.h.m, s.k - 1, s.v.m >> 1)
            if merged is not None:
                rest = tuple(x for i, x in enumerate(tiles) if i not in (a, b))
                out.append(Configuration(rest + (merged,), c.N, c.budget))
    return out


def _neighbors_translate(c: Configuration) -> list[Configuration]:
    out = []
    for idx, t in enumerate(c.tiles):
        rest = c.tiles[:idx] + c.tiles[idx + 1 :]
        for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            cand = _tile(t.j, t.h.m + da, t.k, t.v.m + db, c.N)
            if cand is not None and _free(cand, rest):
                out.append(Configuration(rest + (cand,), c.N, c.budget))
    return out


def _neighbors_aspect(c: Configuration) -> list[Configuration]:
    out = []
    for idx, t in enumerate(c.tiles):
        rest = c.tiles[:idx] + c.tiles[idx + 1 :]
        # keep the lower-left corner where the new shape allows it
        cands = [
            _tile(t.j + 1, 2 * t.h.m, t.k - 1, t.v.m >> 1, c.N),
            _tile(t.j - 1, t.h.m >> 1, t.k + 1, 2 * t.v.m, c.N),
        ]
        for cand in cands:
            if cand is not None and _free(cand, rest):
                out.append(Configuration(rest + (cand,), c.N, c.budget))
    return out


_MOVES = {
    "halve": _neighbors_halve,
    "merge": _neighbors_merge,
    "translate": _neighbors_translate,
    "aspect": _neighbors_aspect,
}


def local_moves(c: Configuration, kinds=MOVE_KINDS) -> list[Configuration]:
    """Measure-preserving neighbours of ``c``, without duplicates or ``c``."""
    seen = {c.key()}
    out = []
    for kind in kinds:
        for n in _MOVES[kind](c):
            if n.key() not in seen:
                seen.add(n.key())
                out.append(n)
    return out


def realizable(budget: Fraction, N: int) -> bool:
    budget = Fraction(budget)
    return 0 < budget <= 1 and (budget * (1 << (2 * N))).denominator == 1


def random_configuration(budget: Fraction, N: int, rng: np.random.Generator, attempts: int = 100) -> Configuration:
    """One random tile per binary digit of the budget, placed without overlap."""
    budget = Fraction(budget)
    if not realizable(budget, N):
        raise DomainError(f"budget {budget} is not realizable at resolution {N}")
    units = int(budget * (1 << (2 * N)))
    powers = [2 * N - b for b in range(units.bit_length()) if units >> b & 1]
    for _ in range(attempts):
        tiles: list[Tile] = []
        for n in sorted(powers):
            lo, hi = max(0, n - N), min(N, n)
            placed = False
            for _ in range(attempts):
                j = int(rng.integers(lo, hi + 1))
                k = n - j
                t = Tile.from_indices(j, int(rng.integers(1 << j)), k, int(rng.integers(1 << k)))
                if _free(t, tiles):
                    tiles.append(t)
                    placed = True
                    break
            if not placed:
                break
        else:
            return Configuration(tuple(tiles), N, budget)
    raise DomainError("could not place a random configuration")


@dataclass(frozen=True)
class SearchParams:
    seed: int = 0
    iterations: int = 200
    t_initial: float = 0.05
    decay: float = 0.98
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise DomainError("decay factor must lie in (0, 1)")
        if self.iterations < 1:
            raise DomainError("iterations must be at least 1")
        if self.t_initial < 0:
            raise DomainError("temperature must be nonnegative")
        if len(self.weights) != len(MOVE_KINDS) or any(w < 0 for w in self.weights) or not any(self.weights):
            raise DomainError("one nonnegative weight per move kind is required")
        if not 0 <= self.seed < 1 << 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "iterations": self.iterations,
            "t_initial": self.t_initial,
            "decay": self.decay,
            "weights": dict(zip(MOVE_KINDS, self.weights)),
        }


@dataclass
class SearchTrace:
    rows: list[tuple[int, float, float, str]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "accepted_ratio", "best_ratio", "move"])
        for it, acc, best, kind in self.rows:
            w.writerow([it, repr(acc), repr(best), kind])
        return buf.getvalue()

    @property
    def best(self) -> list[float]:
        return [r[2] for r in self.rows]


def search_extremizer(
    e: ExponentPair,
    budget: Fraction,
    params: SearchParams = SearchParams(),
    grid: SpacetimeGrid = REFERENCE_GRID,
    N: int = 5,
    start: Configuration | None = None,
) -> tuple[Configuration, SearchTrace]:
    """Anneal the ratio over tile configurations of area ``budget``.

    A step draws a move kind by weight among those with neighbours, then a
    neighbour uniformly.  Improvements are always accepted, a loss of
    relative size ``d`` with probability ``exp(-d / T)``; ``T = 0`` is greedy.
    """
    budget = Fraction(budget)
    if not realizable(budget, N):
        raise DomainError(f"budget {budget} is not realizable at resolution {N}")
    rng = np.random.default_rng(params.seed)
    current = start if start is not None else random_configuration(budget, N, rng)
    if current.budget != budget or current.N != N:
        raise DomainError("start configuration does not match budget and resolution")
    cache: dict[tuple, float] = {}

    def objective(c: Configuration) -> float:
        k = c.key()
        if k not in cache:
            cache[k] = ratio(c.cells, e, grid)
        return cache[k]

    cur_val = objective(current)
    best, best_val = current, cur_val
    trace = SearchTrace([(0, cur_val, best_val, "start")])
    weights = np.asarray(params.weights, dtype=np.float64)
    T = params.t_initial
    for it in range(1, params.iterations + 1):
        options = {kind: _MOVES[kind](current) for kind in MOVE_KINDS}
        live = np.array([bool(options[k]) for k in MOVE_KINDS]) & (weights > 0)
        if not live.any():
            trace.rows.append((it, cur_val, best_val, "none"))
            continue
        w = np.where(live, weights, 0.0)
        kind = MOVE_KINDS[int(rng.choice(len(MOVE_KINDS), p=w / w.sum()))]
        cand = options[kind][int(rng.integers(len(options[kind])))]
        val = objective(cand)
        accept = val >= cur_val
        if not accept and T > 0:
            accept = rng.random() < math.exp(-(cur_val - val) / (cur_val * T))
        if accept:
            current, cur_val = cand, val
        if cur_val > best_val:
            best, best_val = current, cur_val
        trace.rows.append((it, cur_val, best_val, kind if accept else f"{kind}:rejected"))
        T *= params.decay
    return best, trace
