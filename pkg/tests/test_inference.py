import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condscan.genlab import gen_independent_gauss, gen_sign_flip, gen_xor_cube
from condscan.grid import BoundedGrid, LocalScanner, LocalWindows, UpperTails, build_grid, scan
from condscan.inference import (add_one_p_value, permutation_test, replicate_rng,
                                thread_count)
from condscan.moments import PairedSample
from condscan.multivar import MultiSample, mutual_scan


def test_rejects_too_few_replicates_and_negative_seed():
    s = gen_independent_gauss(100, 0)
    with pytest.raises(ValueError):
        permutation_test(s, BoundedGrid(4), B=18)
    with pytest.raises(ValueError):
        permutation_test(s, BoundedGrid(4), B=19, seed=-1)


def test_p_value_formula():
    s = gen_independent_gauss(300, 1)
    res = permutation_test(s, BoundedGrid(4), B=39, seed=3)
    hits = int(np.sum(res.null_stats >= res.observed_stat))
    assert res.p_value == (1 + hits) / 40
    assert 0 < res.p_value <= 1
    assert res.null_stats.shape == (39,)
    assert res.observed_stat == scan(s, BoundedGrid(4)).max_abs_cor


def test_floor_when_observed_beats_every_replicate():
    assert add_one_p_value(2.0, np.ones(99)) == 1 / 100


@given(st.lists(st.floats(0, 1), min_size=19, max_size=200), st.floats(0, 1))
def test_adding_a_larger_replicate_never_lowers_p(null, observed):
    before = add_one_p_value(observed, null)
    after = add_one_p_value(observed, null + [observed + 0.5])
    assert after >= before


def test_replicates_use_their_own_streams():
    s = gen_independent_gauss(400, 2)
    res = permutation_test(s, BoundedGrid(5), B=25, seed=11)
    grid = build_grid(s, 5)
    for b in (0, 7, 24):
        perm = replicate_rng(11, b).permutation(s.n)
        ref = scan(s.with_y(s.y[perm]), BoundedGrid(5), grid=grid).max_abs_cor
        assert res.null_stats[b] == pytest.approx(ref, abs=1e-12)


def test_deterministic_and_thread_independent(monkeypatch):
    s = gen_independent_gauss(2000, 3)
    one = permutation_test(s, BoundedGrid(6), B=99, seed=5, threads=1)
    many = permutation_test(s, BoundedGrid(6), B=99, seed=5, threads=4)
    again = permutation_test(s, BoundedGrid(6), B=99, seed=5)
    assert one.null_stats.tobytes() == many.null_stats.tobytes() == again.null_stats.tobytes()
    monkeypatch.setenv("CONDSCAN_THREADS", "3")
    env = permutation_test(s, BoundedGrid(6), B=99, seed=5)
    assert env.null_stats.tobytes() == one.null_stats.tobytes()


def test_thread_env_validation(monkeypatch):
    monkeypatch.delenv("CONDSCAN_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("CONDSCAN_THREADS", "6")
    assert thread_count() == 6
    for bad in ("0", "-2", "many"):
        monkeypatch.setenv("CONDSCAN_THREADS", bad)
        with pytest.raises(ValueError):
            thread_count()


def test_sign_flip_is_significant():
    res = permutation_test(gen_sign_flip(2000, 9), BoundedGrid(8), B=199, seed=1)
    assert res.p_value <= 0.005


def test_tails_and_local_families():
    s = gen_sign_flip(3000, 4)
    tails = permutation_test(s, UpperTails(6), B=49, seed=2)
    assert tails.observed.family == "tails" and tails.p_value <= 0.05
    local = permutation_test(gen_independent_gauss(1500, 4), LocalWindows(1.0), B=29, seed=2)
    assert local.observed.family == "local"
    s2 = gen_independent_gauss(1500, 4)
    perm = replicate_rng(2, 3).permutation(s2.n)
    ref = LocalScanner(s2, 1.0, None, 30).statistic(s2.y[perm])
    assert local.null_stats[3] == ref


def test_multisample_permutes_all_but_the_first_column():
    s = gen_xor_cube(3000, 5)
    res = permutation_test(s, BoundedGrid(2), B=19, seed=8, m_min=10)
    assert res.observed_stat > 0.95 and res.p_value == 1 / 20
    rng = replicate_rng(8, 4)
    cols = [np.arange(s.n)] + [rng.permutation(s.n) for _ in range(2)]
    shuffled = MultiSample(np.column_stack([s.data[p, k] for k, p in enumerate(cols)]))
    ref = mutual_scan(shuffled, levels=2, m_min=10).max_abs_cor
    assert res.null_stats[4] == pytest.approx(ref, abs=1e-12)


def test_two_column_multisample_matches_paired():
    pair = gen_independent_gauss(500, 6)
    a = permutation_test(pair, BoundedGrid(4), B=19, seed=1)
    b = permutation_test(MultiSample(pair.points()), BoundedGrid(4), B=19, seed=1)
    assert a.null_stats.tobytes() == b.null_stats.tobytes()


def test_multisample_rejects_local_windows():
    with pytest.raises(TypeError):
        permutation_test(gen_xor_cube(100, 0), LocalWindows(0.5), B=19)


def test_small_null_study_respects_the_validity_bound():
    B, alpha, reps = 39, 0.1, 200
    pvals = np.array([
        permutation_test(PairedSample(*np.random.default_rng(1000 + r).normal(size=(2, 300))),
                         BoundedGrid(4), B=B, seed=r).p_value
        for r in range(reps)
    ])
    bound = alpha + 2 / (B + 1) + 3 * np.sqrt(alpha * (1 - alpha) / reps)
    assert np.mean(pvals <= alpha) <= bound
