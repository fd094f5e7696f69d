import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condscan.genlab import (gen_hidden_blocks, gen_independent_gauss, gen_independent_uniform,
                             gen_sign_flip)
from condscan.grid import (BoundedGrid, GridScanner, LocalWindows, QuantileGrid, UpperTails,
                           build_grid, build_sat, interval_label, quantile_cuts,
                           report_rectangle, scan, support_product_check)
from condscan.moments import (Interval, PairedSample, Rectangle, conditional_correlation,
                              conditional_covariance, conditional_moments, moments_of)

# 95% and 99% quantiles and maximum of max|cor| over 200 seeded independent
# Gaussian samples (n = 1e4, BoundedGrid(8), m_min = 30, seeds 10000..10199).
GAUSS_B8_NULL_Q95 = 0.2606
GAUSS_B8_NULL_MAX = 0.2900


def random_sample(seed, n=200, ties=False):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n), rng.exponential(size=n) - 0.3 * rng.normal(size=n)
    if ties:
        x, y = np.round(x, 1), np.round(y, 1)
    return PairedSample(x, y)


# -- quantile grid -------------------------------------------------------------------

def test_cuts_on_integer_ramp():
    cuts = quantile_cuts(np.arange(100), 4)
    assert cuts.tolist() == [24.75, 49.5, 74.25]
    assert np.allclose(cuts, np.quantile(np.arange(100), [0.25, 0.5, 0.75]))


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=300, unique=True),
       st.integers(2, 12))
def test_cuts_follow_linear_interpolation_quantiles(values, levels):
    v = np.array(values)
    ref = np.unique(np.quantile(v, np.arange(1, levels) / levels))
    ref = ref[ref > v.min()]
    got = quantile_cuts(v, levels)
    assert got.size == ref.size
    assert np.allclose(got, ref, rtol=1e-14, atol=1e-9)


def test_constant_column_gives_single_bin():
    s = PairedSample(np.full(20, 3.0), np.arange(20.0))
    g = build_grid(s, 5)
    assert g.g_x == 1 and g.g_y == 5


def test_levels_equal_to_n_gives_one_point_per_bin():
    s = PairedSample(np.arange(6.0), np.arange(6.0)[::-1])
    g = build_grid(s, 6)
    assert g.g_x == 6
    assert np.bincount(g.bin_x(s.x)).tolist() == [1] * 6


def test_cut_tied_with_minimum_moves_to_midpoint():
    v = np.array([-1.0] * 6 + [1.0] * 4)
    assert quantile_cuts(v, 2).tolist() == [0.0]


def test_nested_levels_share_cuts_bit_for_bit():
    v = np.random.default_rng(3).normal(size=997)
    c4, c8, c12 = (quantile_cuts(v, k) for k in (4, 8, 12))
    assert set(c4.tolist()) <= set(c8.tolist())
    assert set(c4.tolist()) <= set(c12.tolist())


def test_build_grid_validation():
    s = PairedSample(np.arange(3.0), np.arange(3.0))
    with pytest.raises(ValueError):
        build_grid(s, 1)
    with pytest.raises(ValueError):
        build_grid(s, 4)
    with pytest.raises(ValueError):
        BoundedGrid(1)


@given(st.integers(0, 10**6), st.integers(2, 10))
def test_every_observation_in_exactly_one_bin(seed, levels):
    s = random_sample(seed, n=50, ties=seed % 2 == 0)
    g = build_grid(s, levels)
    bx, by = g.bin_x(s.x), g.bin_y(s.y)
    assert bx.min() >= 0 and bx.max() < g.g_x and by.max() < g.g_y
    edges = g.x_edges
    for k in range(g.g_x):
        inside = (s.x >= edges[k]) & ((s.x < edges[k + 1]) | (k == g.g_x - 1))
        assert np.array_equal(inside, bx == k)


def test_from_cuts_cleans_against_data_range():
    s = PairedSample(np.arange(5.0), np.arange(5.0))
    g = QuantileGrid.from_cuts(s, [-3, 0, 2, 2, 4, 9], [1])
    assert g.x_cuts.tolist() == [2.0, 4.0]


# -- summed-area table -------------------------------------------------------------

def test_single_point_sat():
    s = PairedSample([0.0, 1.0], [0.0, 1.0])
    g = QuantileGrid.from_cuts(s, [0.5], [0.5])
    sat = build_sat(s, g)
    assert sat.readout(0, 1, 0, 1).m == 1
    assert sat.planes[0].tolist() == [[1.0, 1.0], [1.0, 2.0]]


def test_full_grid_readout_equals_exact_moments():
    s = random_sample(5, n=5000)
    g = build_grid(s, 10)
    got = build_sat(s, g).readout(0, g.g_x, 0, g.g_y)
    ref = conditional_moments(s, Rectangle.full(2))
    assert got.as_array().tolist() == ref.as_array().tolist()


def naive_bin_union(s, g, i0, i1, j0, j1):
    xe, ye = g.x_edges, g.y_edges
    mx = (s.x >= xe[i0]) & ((s.x < xe[i1]) | ((i1 == g.g_x) & (s.x <= xe[i1])))
    my = (s.y >= ye[j0]) & ((s.y < ye[j1]) | ((j1 == g.g_y) & (s.y <= ye[j1])))
    keep = mx & my
    return moments_of(s.x[keep], s.y[keep])


def assert_moments_close(got, ref, rtol):
    assert got.m == ref.m
    for a, b, scale in [(got.sx, ref.sx, ref.m), (got.sy, ref.sy, ref.m),
                        (got.sxy, ref.sxy, ref.sxx + ref.syy), (got.sxx, ref.sxx, ref.sxx),
                        (got.syy, ref.syy, ref.syy)]:
        assert abs(a - b) <= rtol * max(abs(b), 1e-300) or abs(a - b) <= 1e-15 * scale


@given(st.integers(0, 10**6), st.booleans())
def test_sat_matches_naive_on_every_rectangle(seed, ties):
    s = random_sample(seed, n=200, ties=ties)
    g = build_grid(s, 6)
    sat = build_sat(s, g)
    for i0, i1 in itertools.combinations(range(g.g_x + 1), 2):
        for j0, j1 in itertools.combinations(range(g.g_y + 1), 2):
            assert_moments_close(sat.readout(i0, i1, j0, j1),
                                 naive_bin_union(s, g, i0, i1, j0, j1), 1e-9)


def test_sat_keeps_precision_far_from_the_origin():
    rng = np.random.default_rng(8)
    s = PairedSample(1e6 + rng.random(3000), -1e6 + rng.random(3000))
    g = build_grid(s, 8)
    sat = build_sat(s, g, origin=(1e6, -1e6))
    ref = naive_bin_union(PairedSample(s.x - 1e6, s.y + 1e6), g.__class__(
        g.x_cuts - 1e6, g.y_cuts + 1e6, (g.x_range[0] - 1e6, g.x_range[1] - 1e6),
        (g.y_range[0] + 1e6, g.y_range[1] + 1e6)), 2, 5, 1, 7)
    got = sat.readout(2, 5, 1, 7)
    assert got.m == ref.m
    assert conditional_correlation(got) == pytest.approx(conditional_correlation(ref), abs=1e-8)


# -- grid scans --------------------------------------------------------------------

@pytest.mark.parametrize("family", [BoundedGrid(5), UpperTails(5)])
def test_scan_records_match_closed_rectangles(family):
    s = random_sample(21, n=300, ties=True)
    rep = scan(s, family, m_min=2)
    assert rep.total == (15 * 15 if family.name == "bounded" else 25)
    for k in range(rep.total):
        mom = conditional_moments(s, report_rectangle(rep, k))
        assert mom.m == rep.m[k]
        if mom.m >= 2:
            assert rep.cor[k] == pytest.approx(conditional_correlation(mom), abs=1e-9)
            assert rep.cov[k] == pytest.approx(conditional_covariance(mom), rel=1e-9, abs=1e-12)


def test_report_invariants():
    s = random_sample(2, n=500)
    rep = scan(s, BoundedGrid(6), m_min=30)
    kept = ~rep.skipped
    assert rep.max_abs_cor == np.abs(rep.cor[kept]).max()
    assert np.array_equal(rep.skipped, rep.m < 30)
    assert rep.skipped_count == int((rep.m < 30).sum())
    k = rep.argmax
    assert abs(rep.cor[k]) == rep.max_abs_cor
    assert k == np.flatnonzero(kept & (np.abs(rep.cor) == rep.max_abs_cor))[0]


def test_all_skipped_gives_zero():
    rep = scan(random_sample(2, n=100), BoundedGrid(4), m_min=1000)
    assert rep.argmax is None and rep.max_abs_cor == 0.0 and rep.skipped_count == rep.total


def test_scan_rejects_tiny_m_min():
    with pytest.raises(ValueError):
        scan(random_sample(1), BoundedGrid(4), m_min=1)


def test_sign_flip_tail_quadrant_is_perfectly_correlated():
    s = gen_sign_flip(20_000, 1)
    g = QuantileGrid.from_cuts(s, [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0])
    rep = scan(s, UpperTails(4), m_min=30, grid=g)
    k = [i for i in range(rep.total) if rep.lower[i].tolist() == [0.0, 0.0]][0]
    assert rep.cor[k] > 0.999
    assert rep.max_abs_cor > 0.999


def test_sign_flip_centre_square_is_uncorrelated():
    s = gen_sign_flip(100_000, 2)
    sq = Interval.bounded(-1.0, 1.0)
    assert abs(conditional_correlation(conditional_moments(s, Rectangle.of(sq, sq)))) < 0.02


def test_independent_gaussian_scan_stays_within_null_calibration():
    rep = scan(gen_independent_gauss(10_000, 123), BoundedGrid(8), m_min=30)
    assert rep.max_abs_cor < GAUSS_B8_NULL_MAX
    # The smaller bound quoted for this setting is below the typical null value.
    assert GAUSS_B8_NULL_Q95 > 0.15


@given(st.integers(0, 10**6))
def test_finer_nested_grid_never_lowers_the_maximum(seed):
    s = random_sample(seed, n=400)
    coarse = scan(s, BoundedGrid(4), m_min=10)
    fine = scan(s, BoundedGrid(8), m_min=10)
    # Shared rectangles are read from different tables, so allow rounding.
    assert fine.max_abs_cor >= coarse.max_abs_cor - 1e-12
    tails4 = scan(s, UpperTails(4), m_min=10)
    tails8 = scan(s, UpperTails(8), m_min=10)
    assert tails8.max_abs_cor >= tails4.max_abs_cor - 1e-12


def test_scan_is_deterministic():
    s = random_sample(77, n=3000)
    a, b = scan(s, BoundedGrid(8)), scan(s, BoundedGrid(8))
    for field in ("lower", "upper", "m", "cov", "cor", "skipped", "bins"):
        assert getattr(a, field).tobytes() == getattr(b, field).tobytes()


def test_batched_permutations_match_single_scans():
    s = random_sample(4, n=400)
    scanner = GridScanner(s, BoundedGrid(5), m_min=10)
    rng = np.random.default_rng(0)
    perms = np.stack([rng.permutation(s.n) for _ in range(3)])
    batch = scanner.statistic(perms)
    for b in range(3):
        single = scan(s.with_y(s.y[perms[b]]), BoundedGrid(5), m_min=10,
                      grid=scanner.grid).max_abs_cor
        assert batch[b] == pytest.approx(single, abs=1e-9)


def test_interval_labels():
    s = PairedSample(np.arange(10.0), np.arange(10.0))
    rep = scan(s, BoundedGrid(2), m_min=2)
    labels = {interval_label(rep, k, 0) for k in range(rep.total)}
    assert labels == {"[0, 4.5)", "[4.5, 9]", "[0, 9]"}
    tails = scan(s, UpperTails(2), m_min=2)
    assert interval_label(tails, 1, 1) == "[4.5, inf)"


# -- local windows ----------------------------------------------------------------

def test_local_family_validation():
    for eps, stride in [(0, None), (-1, None), (1.0, 0.0), (1.0, 1.5)]:
        with pytest.raises(ValueError):
            LocalWindows(eps, stride)
    assert LocalWindows(0.4).stride == 0.2


@given(st.integers(0, 10**6), st.sampled_from([0.3, 0.5, 1.0]))
def test_local_windows_match_closed_rectangles(seed, eps):
    s = random_sample(seed, n=120, ties=seed % 3 == 0)
    rep = scan(s, LocalWindows(eps), m_min=2)
    for k in range(rep.total):
        lo, hi = rep.lower[k], rep.upper[k]
        assert np.all(hi - lo == pytest.approx(eps))
        rect = Rectangle.of(Interval.bounded(lo[0], hi[0]), Interval.bounded(lo[1], hi[1]))
        mom = conditional_moments(s, rect)
        assert mom.m == rep.m[k]
        if mom.m >= 2:
            assert rep.cor[k] == pytest.approx(conditional_correlation(mom), abs=1e-9)


def test_local_windows_cover_the_data():
    s = random_sample(6, n=300)
    rep = scan(s, LocalWindows(0.5), m_min=2)
    assert rep.lower[:, 0].min() == s.x.min() and rep.upper[:, 0].max() >= s.x.max()
    assert rep.lower[:, 1].min() == s.y.min() and rep.upper[:, 1].max() >= s.y.max()


def test_discrete_x_makes_every_window_zero():
    x = np.repeat([0.0, 1.0, 2.0], 400)
    y = x + np.random.default_rng(1).normal(scale=0.1, size=x.size)
    rep = scan(PairedSample(x, y), LocalWindows(0.4), m_min=2)
    assert np.all(rep.cor == 0.0)
    assert rep.max_abs_cor == 0.0
    assert np.count_nonzero(rep.m >= 2) > 0


# -- support diagnostic --------------------------------------------------------------

def test_support_check_uniform_is_clean():
    s = gen_independent_uniform(10_000, 3)
    assert support_product_check(s, build_grid(s, 8)).fraction == 0.0


def test_support_check_sign_flip_is_flagged():
    s = gen_sign_flip(10_000, 3)
    rep = support_product_check(s, build_grid(s, 8))
    assert rep.fraction > 0.3
    assert (0, 3) in rep.cells


def test_support_check_hidden_blocks_cells_are_occupied():
    # The off-diagonal blocks carry mass 1/6 each, so no cell is empty.
    s = gen_hidden_blocks(10_000, 3)
    assert support_product_check(s, build_grid(s, 8)).fraction == 0.0


def test_support_check_flags_a_missing_block():
    s = gen_hidden_blocks(10_000, 3)
    keep = ~((s.x < 1.5) & (s.y > 1.5))
    t = PairedSample(s.x[keep], s.y[keep])
    rep = support_product_check(t, QuantileGrid.from_cuts(t, [1.5], [1.5]))
    assert rep.cells == ((0, 1),)
    assert rep.fraction == 0.25
