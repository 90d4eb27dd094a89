from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperext.dyadic import DomainError, ExponentPair, Tile, measure
from hyperext.extension import SpacetimeGrid, ratio
from hyperext.harness import exhaustive_tile_reference
from hyperext.search import (
    Configuration,
    SearchParams,
    local_moves,
    random_configuration,
    realizable,
    search_extremizer,
    tiles_overlap,
)

F = Fraction
E74 = ExponentPair(F(7, 4), 2)
SMALL = SpacetimeGrid(4.0, 4.0, 16, 16)


def test_unit_square_has_no_neighbours():
    c = Configuration((Tile.from_indices(0, 0, 0, 0),), 3, 1)
    assert local_moves(c) == []


def test_aspect_swap_is_a_neighbour():
    t = Tile.from_indices(1, 0, 2, 0)
    c = Configuration((t,), 3, F(1, 8))
    keys = {n.key() for n in local_moves(c, ("aspect",))}
    assert ((2, 0, 1, 0),) in keys
    assert ((0, 0, 3, 0),) in keys


def test_translate_and_merge():
    c = Configuration((Tile.from_indices(1, 0, 1, 0),), 2, F(1, 4))
    keys = {n.key() for n in local_moves(c, ("translate",))}
    assert keys == {((1, 1, 1, 0),), ((1, 0, 1, 1),)}
    pair = Configuration((Tile.from_indices(2, 0, 1, 0), Tile.from_indices(2, 1, 1, 0)), 2, F(1, 4))
    assert [n.key() for n in local_moves(pair, ("merge",))] == [((1, 0, 1, 0),)]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**32 - 1))
def test_neighbours_keep_the_budget(units, seed):
    budget = F(units, 16)
    c = random_configuration(budget, 3, np.random.default_rng(seed))
    for n in local_moves(c):
        assert n.budget == budget and measure(n.cells) == budget
        assert n.key() != c.key()
        ts = n.tiles
        assert not any(tiles_overlap(ts[a], ts[b]) for a in range(len(ts)) for b in range(a + 1, len(ts)))


def test_configuration_validation_and_json():
    a = Tile.from_indices(1, 0, 1, 0)
    with pytest.raises(DomainError):
        Configuration((a, Tile.from_indices(2, 0, 2, 0)), 3, F(1, 4) + F(1, 16))
    with pytest.raises(DomainError):
        Configuration((a,), 3, F(1, 2))
    with pytest.raises(DomainError):
        Configuration((Tile.from_indices(4, 0, 0, 0),), 3, F(1, 16))
    c = Configuration((a, Tile.from_indices(2, 3, 2, 3)), 3, F(5, 16))
    assert Configuration.from_json(c.to_json()) == c


def test_realizable_and_random_configuration(rng):
    assert realizable(F(3, 64), 3) and not realizable(F(1, 128), 3) and not realizable(F(0), 3)
    c = random_configuration(F(7, 16), 3, rng)
    assert len(c.tiles) == 3
    with pytest.raises(DomainError):
        random_configuration(F(1, 3), 3, rng)


def test_params_validation():
    for bad in ({"decay": 1.0}, {"iterations": 0}, {"t_initial": -1.0}, {"weights": (0, 0, 0, 0)}, {"seed": -1}):
        with pytest.raises(DomainError):
            SearchParams(**bad)


def test_greedy_from_best_tile_stays_there():
    ref = exhaustive_tile_reference(3, E74, SMALL, measure_log2=-2, positions="all")
    start = Configuration((ref.tile,), 3, F(1, 4))
    best, trace = search_extremizer(E74, F(1, 4), SearchParams(iterations=30, t_initial=0.0), SMALL, N=3, start=start)
    assert best == start
    assert trace.best[-1] == ref.ratio


def test_seeds_differ_and_never_lose_the_start():
    traces = []
    for seed in (0, 1):
        best, trace = search_extremizer(E74, F(1, 8), SearchParams(seed=seed, iterations=25), SMALL, N=3)
        assert trace.best[-1] >= trace.rows[0][1]
        assert np.all(np.diff(trace.best) >= 0)
        assert trace.best[-1] == ratio(best.cells, E74, SMALL)
        traces.append(trace.to_csv())
    assert traces[0] != traces[1]
    assert traces[0].splitlines()[0] == "iteration,accepted_ratio,best_ratio,move"


def test_search_guards():
    with pytest.raises(DomainError):
        search_extremizer(E74, F(1, 3), grid=SMALL, N=3)
    start = Configuration((Tile.from_indices(1, 0, 1, 0),), 3, F(1, 4))
    with pytest.raises(DomainError):
        search_extremizer(E74, F(1, 2), grid=SMALL, N=3, start=start)
