import math
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_set
from oracles import box_slice_t0, direct_sample
from hyperext.dyadic import CellSet, DomainError, ExponentPair, Tile
from hyperext.extension import (
    REFERENCE_GRID,
    Density,
    Field,
    NumericGuardError,
    QuadratureSpec,
    SpacetimeGrid,
    bilinear_norm,
    extend,
    lp_norm,
    lp_power,
    parabolic_rescale,
    ratio,
    tail_report,
    transform_length,
)
from hyperext.harness import box, refined

F = Fraction
E74 = ExponentPair(F(7, 4), 2)
SMALL = SpacetimeGrid(4.0, 4.0, 9, 16)

# unit square at N = 6, s = 7/4 on the reference grid; the doubled-sample
# grid gives 4.963616399 (relative difference 1.5e-5)
SQUARE_RATIO = 4.963690063467746


def rel(a, b):
    return abs(a - b) / abs(b)


# -- grids and fields -------------------------------------------------------------------


def test_grid_lattice_contains_origin():
    for M in (2, 7, 8, 65):
        g = SpacetimeGrid(1.0, 2.0, M, M)
        t, x1, x2 = g.axes()
        assert t[M // 2] == 0.0 and x1[M // 2] == 0.0
        assert g.h_t == pytest.approx(2.0 / M)
    with pytest.raises(DomainError):
        SpacetimeGrid(1.0, 1.0, 1, 4)
    with pytest.raises(DomainError):
        SpacetimeGrid(0.0, 1.0, 4, 4)


def test_empty_density_gives_zero_field():
    F0 = extend(Density(CellSet.empty(4)), SMALL)
    assert F0.samples.shape == SMALL.shape and not F0.samples.any()


def test_single_cell_at_origin_equals_area():
    N = 4
    Fd = extend(Density(CellSet(N, [[3, 5]])), SMALL)
    i0 = (SMALL.M_t // 2, SMALL.M_x // 2, SMALL.M_x2 // 2)
    assert Fd.samples[i0] == pytest.approx(2.0 ** (-2 * N), rel=1e-15)


def test_against_direct_oracle(rng):
    N = 4
    A = random_set(rng, N, 0.3)
    w = rng.normal(size=len(A)) + 1j * rng.normal(size=len(A))
    grid = SpacetimeGrid(6.0, 5.0, 13, 24)
    field = extend(Density(A, w), grid)
    t, x1, x2 = grid.axes()
    for _ in range(10):
        i, j, k = (int(rng.integers(m)) for m in grid.shape)
        ref = direct_sample(A.cells.tolist(), N, t[i], x1[j], x2[k], w)
        assert abs(field.samples[i, j, k] - ref) <= 1e-10 * abs(ref)


def test_t0_slice_against_closed_form(rng):
    N = 5
    grid = SpacetimeGrid(3.0, 8.0, 6, 32)
    field = extend(Density(box(N, (F(1, 8), F(3, 4)), (F(1, 4), F(5, 8)))), grid)
    _, x1, x2 = grid.axes()
    it0 = grid.M_t // 2
    for _ in range(10):
        j, k = int(rng.integers(32)), int(rng.integers(32))
        ref = box_slice_t0(1 / 8, 3 / 4, 1 / 4, 5 / 8, N, x1[j], x2[k])
        assert abs(field.samples[it0, j, k] - ref) <= 1e-10 * abs(ref)


def test_t0_slice_is_transform_at_minus_x():
    # with the positive sign the t = 0 slice conjugates under x -> -x for real f
    N = 3
    A = CellSet(N, [[1, 2], [5, 0], [7, 7]])
    grid = SpacetimeGrid(1.0, 4.0, 2, 9)
    S = extend(Density(A), grid).samples[1]
    assert np.allclose(S[::-1, ::-1], np.conj(S), rtol=0, atol=1e-15)


def test_guard_rejects_coarse_lattice():
    N = 2
    A = CellSet(N, [[0, 0]])
    grid = SpacetimeGrid(1.0, 8 * math.pi, 4, 4)  # h_x = 4 pi, node spacing 1/4
    with pytest.raises(NumericGuardError):
        extend(Density(A), grid)
    extend(Density(A), SpacetimeGrid(1.0, 7.9 * math.pi, 4, 4))


# -- algebraic identities -----------------------------------------------------------------


def test_linearity(rng):
    N = 4
    A = random_set(rng, N, 0.5)
    u = rng.normal(size=len(A)) + 1j * rng.normal(size=len(A))
    v = rng.normal(size=len(A))
    Fu, Fv = extend(Density(A, u), SMALL), extend(Density(A, v), SMALL)
    Fs = extend(Density(A, u + v), SMALL)
    scale = np.abs(Fs.samples).max()
    assert np.abs(Fs.samples - (Fu + Fv).samples).max() <= 1e-12 * scale


def test_conjugation_symmetry(rng):
    N = 4
    A = random_set(rng, N, 0.4)
    w = rng.normal(size=len(A))
    grid = SpacetimeGrid(3.0, 4.0, 7, 15)  # odd sizes: symmetric lattices
    S = extend(Density(A, w), grid).samples
    scale = np.abs(S).max()
    assert np.abs(S[::-1, ::-1, ::-1] - np.conj(S)).max() <= 1e-13 * scale


def test_galilean_shear(rng):
    # translating the support by b in xi_2 gives exp(i x_2 b) E f(t, x_1 + t b, x_2)
    N = 4
    A = CellSet(N, rng.integers(0, [16, 8], size=(20, 2)))
    B = A.shifted(0, 4)  # b = 1/4
    b = 0.25
    grid = SpacetimeGrid(4.0, 8.0, 8, 64)  # h_t = 1, h_x = 1/4, so t b / h_x is an integer
    FA, FB = extend(Density(A), grid).samples, extend(Density(B), grid).samples
    t, x1, x2 = grid.axes()
    scale = np.abs(FA).max()
    checked = 0
    for it, tv in enumerate(t):
        d = int(round(tv * b / grid.h_x))
        for j in range(grid.M_x):
            if 0 <= j + d < grid.M_x:
                lhs = FB[it, j, :]
                rhs = np.exp(1j * x2 * b) * FA[it, j + d, :]
                assert np.abs(lhs - rhs).max() <= 1e-12 * scale
                checked += 1
    assert checked > grid.M_t * grid.M_x // 2


@pytest.mark.parametrize("N", [3, 4])
def test_discrete_plancherel(N, rng):
    # on a full period lattice h d M = 2 pi the t = 0 slice has
    # sum |F|^2 h^2 = (2 pi)^2 ||f||_2^2 exactly
    A = random_set(rng, N, 0.5)
    w = rng.normal(size=len(A)) + 1j * rng.normal(size=len(A))
    f = Density(A, w)
    M = 1 << (N + 1)
    h = 2 * math.pi / (M * 2.0**-N)
    grid = SpacetimeGrid(1.0, M * h / 2, 2, M)
    S = extend(f, grid).samples[1]
    lhs = math.fsum((np.abs(S) ** 2).ravel()) * h * h
    assert lhs == pytest.approx((2 * math.pi) ** 2 * f.l2_norm() ** 2, rel=1e-12)


def test_slice_transform_matches_direct(rng):
    N = 4
    A = random_set(rng, N, 0.4)
    w = rng.normal(size=len(A)) + 1j * rng.normal(size=len(A))
    f = Density(A, w)
    for M, L in ((32, 32), (32, 64), (20, 40)):
        h = 2 * math.pi / (L * 2.0**-N)
        grid = SpacetimeGrid(2.0, M * h / 2, 5, M)
        assert transform_length(grid.h_x, 2.0**-N) == L
        fast = extend(f, grid, QuadratureSpec(path="slice-transform"))
        slow = extend(f, grid)
        assert fast.path == "slice-transform" and slow.path == "direct"
        scale = np.abs(slow.samples).max()
        assert np.abs(fast.samples - slow.samples).max() <= 1e-9 * scale


def test_slice_transform_falls_back_when_incompatible(rng):
    f = Density(random_set(rng, 4))
    out = extend(f, SMALL, QuadratureSpec(path="slice-transform"))
    assert out.path == "direct"


def test_oversampling_converges(rng):
    A = Tile.from_indices(1, 0, 1, 1).cells(2)
    grid = SpacetimeGrid(4.0, 4.0, 9, 16)
    fine = extend(Density(A.refine(6)), grid).samples
    errs = [np.abs(extend(Density(A), grid, QuadratureSpec(oversample=q)).samples - fine).max() for q in (1, 2, 4)]
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(DomainError):
        QuadratureSpec(oversample=3)


# -- norms -----------------------------------------------------------------------------------


def test_lp_norm_of_constant_and_single_sample():
    g = SpacetimeGrid(2.0, 3.0, 4, 6)
    vol = 4.0 * 36.0
    const = Field(g, np.full(g.shape, 3.0 + 4.0j))
    for p in (1, 2, F(7, 2)):
        assert lp_norm(const, p) == pytest.approx(5.0 * vol ** (1 / float(p)), rel=1e-13)
    one = np.zeros(g.shape, dtype=complex)
    one[1, 2, 3] = 2.0
    assert lp_norm(Field(g, one), 3) == pytest.approx(2.0 * g.cell_volume ** (1 / 3), rel=1e-15)


def test_lp_norm_guards():
    g = SpacetimeGrid(1.0, 1.0, 2, 2)
    with pytest.raises(DomainError):
        lp_norm(Field(g, np.ones(g.shape, dtype=complex)), F(7, 8))
    assert lp_norm(Field(g, np.ones(g.shape, dtype=complex)), F(7, 8), quasi=True) > 0
    bad = np.ones(g.shape, dtype=complex)
    bad[0, 0, 0] = np.nan
    with pytest.raises(NumericGuardError):
        lp_power(Field(g, bad), 2)


def test_bilinear_norm_examples():
    N = 4
    e = ExponentPair(F(5, 3), 2)
    a = Density(box(N, (0, F(1, 4)), (0, F(1, 4))))
    b = Density(box(N, (F(1, 2), F(3, 4)), (F(1, 2), F(3, 4))))
    assert bilinear_norm(a, Density(CellSet.empty(N)), SMALL, e) == 0.0
    Fa = extend(a, SMALL)
    assert bilinear_norm(a, a, SMALL, e) == pytest.approx(lp_norm(Fa, 2 * e.s) ** 2, rel=1e-12)
    grid = SpacetimeGrid(4.0, 4.0, 32, 32)
    coarse, fine = bilinear_norm(a, b, grid, e), bilinear_norm(a, b, refined(grid), e)
    assert rel(coarse, fine) <= 0.02


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cauchy_schwarz_on_shared_grid(seed):
    r = np.random.default_rng(seed)
    A, B = random_set(r, 3, 0.3), random_set(r, 3, 0.3)
    e = E74
    FA, FB = extend(Density(A), SMALL), extend(Density(B), SMALL)
    lhs = lp_norm(FA * FB, e.s)
    rhs = lp_norm(FA, 2 * e.s) * lp_norm(FB, 2 * e.s)
    assert lhs <= rhs * (1 + 1e-12)


# -- ratio and rescaling -----------------------------------------------------------------------


def test_pinned_square_ratio():
    value = ratio(CellSet.full(6), E74, REFERENCE_GRID)
    assert value == pytest.approx(SQUARE_RATIO, rel=1e-12)


def test_square_ratio_two_resolution_oracle():
    value = ratio(CellSet.full(6), E74, refined(REFERENCE_GRID))
    assert rel(value, SQUARE_RATIO) <= 1e-4


def test_ratio_errors():
    with pytest.raises(DomainError):
        ratio(CellSet.empty(3), E74, SMALL)
    A = CellSet.full(2)
    with pytest.raises(DomainError):
        ratio(Density(A, np.ones(len(A))), E74, SMALL)


def test_halving_time_box_never_increases_ratio(rng):
    A = random_set(rng, 4)
    big = SpacetimeGrid(8.0, 8.0, 64, 64)
    half = SpacetimeGrid(4.0, 8.0, 32, 64)  # same spacing, a subset of the samples
    assert ratio(A, E74, half) <= ratio(A, E74, big)


def test_rescale_identity_and_support():
    sq = Density(CellSet.full(3))
    same = parabolic_rescale(sq, 0, 0)
    assert same.support == sq.support and same.nodes == sq.nodes
    half = parabolic_rescale(sq, 1, 0)
    assert half.support == box(4, (0, F(1, 2)), (0, 1))
    assert half.nodes == (4, 3)
    with pytest.raises(DomainError):
        parabolic_rescale(sq, -1, 0)
    with pytest.raises(DomainError):
        parabolic_rescale(Density(CellSet(15, [[0, 0]])), 2, 0)


def test_rescale_pointwise_on_matched_samples():
    sq = Density(CellSet.full(4))
    grid = SpacetimeGrid(4.0, 4.0, 9, 16)
    base = extend(sq, grid).samples
    resc = extend(parabolic_rescale(sq, 1, 0), grid.rescaled(1, 0)).samples
    assert np.abs(resc - 0.5 * base).max() <= 1e-12 * np.abs(base).max()


def test_rescale_ratio_invariance(rng):
    A = random_set(rng, 4, 0.3)
    grid = SpacetimeGrid(4.0, 4.0, 9, 16)
    r0 = ratio(A, E74, grid)
    for a in range(3):
        for b in range(3):
            r = ratio(parabolic_rescale(Density(A), a, b), E74, grid.rescaled(a, b))
            assert rel(r, r0) <= 1e-12


def test_rescale_preserves_weights(rng):
    A = random_set(rng, 3, 0.5)
    w = rng.normal(size=len(A))
    g = parabolic_rescale(Density(A, w), 1, 2)
    assert g.l2_norm() == pytest.approx(Density(A, w).l2_norm() / math.sqrt(8), rel=1e-14)
    grid = SpacetimeGrid(2.0, 4.0, 5, 16)
    base = extend(Density(A, w), grid).samples
    resc = extend(g, grid.rescaled(1, 2)).samples
    assert np.abs(resc - base / 8).max() <= 1e-12 * np.abs(base).max()


# -- wire format -------------------------------------------------------------------------------


def test_field_dump_roundtrip(rng):
    field = extend(Density(random_set(rng, 3)), SpacetimeGrid(1.0, 2.0, 3, 4))
    data = field.dumps()
    assert struct.unpack("<qqdd", data[:32]) == (3, 4, 1.0, 2.0)
    assert len(data) == 32 + 16 * 3 * 4 * 4
    back = Field.loads(data)
    assert np.array_equal(back.samples, field.samples)
    re0, im0 = struct.unpack("<dd", data[32:48])
    assert complex(re0, im0) == field.samples[0, 0, 0]


def test_slice_csv_header():
    field = extend(Density(CellSet(2, [[0, 0]])), SpacetimeGrid(1.0, 2.0, 2, 2))
    lines = field.slice_csv([1]).splitlines()
    assert lines[0] == "t,x1,x2,abs" and len(lines) == 5


# -- truncation ------------------------------------------------------------------------------


def test_tail_report_empty():
    rep = tail_report(CellSet.empty(3), E74, [SMALL, SMALL.scaled(1, 1, 1)])
    assert rep.norms == [0.0, 0.0] and rep.extrapolated == 0.0


def test_tail_report_single_cell_monotone():
    grids = [SpacetimeGrid(R, R, 4 * int(R), 4 * int(R)) for R in (1.0, 2.0, 4.0)]
    rep = tail_report(CellSet(4, [[0, 0]]), E74, grids)
    assert rep.norms == sorted(rep.norms)
    # |E chi_cell| is nearly the cell area near the origin, so the first
    # norms follow the box volume
    area = 2.0**-8
    vol = 2.0**3
    assert rep.norms[0] == pytest.approx(area * vol ** (1 / 3.5), rel=0.02)


def test_tail_report_unit_square():
    # increments of ||E chi||^p between R = 4, 8, 16 are still growing; the
    # R = 32 run (6.1214) lies between the last truncated norm and the
    # extrapolation, which uses the asymptotic rate p - 3
    grids = [SpacetimeGrid(R, R, 4 * int(R), 4 * int(R)) for R in (4.0, 8.0, 16.0)]
    rep = tail_report(CellSet.full(5), E74, grids)
    big = lp_norm(extend(Density(CellSet.full(5)), SpacetimeGrid(32.0, 32.0, 128, 128)), 2 * E74.s)
    assert rep.norms == sorted(rep.norms)
    assert rep.exponent == pytest.approx(0.5)
    assert rep.fitted_exponent < 0
    assert rep.norms[-1] < big < rep.extrapolated
    assert abs(rep.extrapolated - big) <= rep.uncertainty


def test_tail_report_rejects_non_geometric_boxes():
    grids = [SpacetimeGrid(R, R, 4 * int(R), 4 * int(R)) for R in (1.0, 2.0, 3.0)]
    with pytest.raises(DomainError):
        tail_report(CellSet(3, [[0, 0]]), E74, grids)
