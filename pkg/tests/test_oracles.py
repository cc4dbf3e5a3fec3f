from fractions import Fraction

import numpy as np
import pytest

from tbrw import oracles as O


def test_pa_target_values():
    assert O.pa_target(1) == pytest.approx(2 / 3)
    assert O.pa_target(2) == pytest.approx(1 / 6)
    assert O.pa_target(3) == pytest.approx(1 / 15)
    assert O.pa_target(4) == pytest.approx(1 / 30)
    assert O.pa_target(5) == pytest.approx(2 / 105)
    with pytest.raises(O.OracleError):
        O.pa_target(0)


def test_pa_partial_sum():
    assert O.pa_partial_sum(50) == 1 - Fraction(2, 51 * 52)
    assert float(O.pa_partial_sum(50)) == pytest.approx(0.999246, abs=1e-6)


def test_pa_tail_order():
    d = 10**6
    assert d**3 * O.pa_target(d) == pytest.approx(4, rel=1e-5)


def test_return_times():
    assert O.expected_return_time([-1, 0], 0) == 2
    assert O.expected_return_time([-1, 0], 1) == 2
    assert O.expected_return_time([-1, 0, 0, 0, 0], 0) == 2
    assert O.expected_return_time([-1, 0, 1], 2) == 4
    for par, v in [([-1, 0, 0, 0, 0], 0), ([-1, 0, 1], 2), ([-1, 0, 1, 1, 0], 3)]:
        assert O.expected_return_time_linear(par, v) == pytest.approx(O.expected_return_time(par, v), abs=1e-9)


def test_hitting_times():
    assert O.subtree_hitting_time([-1, 0], 1, 0) == 1
    assert O.subtree_hitting_time([-1, 0, 1], 1, 0) == 3
    assert O.subtree_hitting_time([-1, 0, 0, 0], 2, 0) == 1
    assert O.subtree_hitting_time_linear([-1, 0, 1], 1, 0) == pytest.approx(3)
    with pytest.raises(O.OracleError):
        O.subtree_hitting_time([-1, 0, 1], 2, 0)


def test_cover_bound():
    assert O.cover_time_bound(10) == 200
    assert O.cover_time_bound(1) == 2
    assert all(O.cover_time_bound(m) < O.cover_time_bound(m + 1) for m in range(1, 50))


def test_walk_distribution():
    assert O.exact_walk_distribution([-1, 0], 0, 0).tolist() == [1.0, 0.0]
    assert O.exact_walk_distribution([-1, 0], 0, 1).tolist() == [0.5, 0.5]
    assert O.exact_walk_distribution([-1, 0], 0, 2).tolist() == [0.75, 0.25]


def test_walk_distribution_squaring_branch():
    par = [-1, 0, 1, 1]
    a = O.exact_walk_distribution(par, 2, 5000)
    b = O.stationary_distribution(par)
    assert np.abs(a - b).sum() < 1e-12


def test_stationary():
    assert O.stationary_distribution([-1, 0]) == pytest.approx([2 / 3, 1 / 3])
    assert O.stationary_distribution([-1, 0], paper_shorthand=True) == pytest.approx([0.5, 0.5])
    assert O.stationary_distribution([-1, 0, 0, 0]) == pytest.approx([4 / 7, 1 / 7, 1 / 7, 1 / 7])


def test_tv():
    assert O.tv_distance({1: 0.5, 2: 0.5}, {1: 0.5, 2: 0.5}) == 0
    assert O.tv_distance({1: 1.0}, {2: 1.0}) == 1
    assert O.tv_distance({0: 0.5, 1: 0.5}, {0: 1.0}) == 0.5


def test_poisson_binomial():
    assert O.poisson_binomial_cdf([1, 1, 1], 2) == 0
    assert O.poisson_binomial_cdf([1, 1, 1], 3) == 1
    assert O.poisson_binomial_cdf([Fraction(1, 2), Fraction(1, 3)], 0) == Fraction(1, 3)
    assert O.poisson_binomial_cdf([Fraction(1, 2)] * 4, 1) == Fraction(5, 16)
    assert O.poisson_binomial_cdf([0.5] * 4, 1) == pytest.approx(5 / 16)


def test_dp_equals_enumeration():
    rng = np.random.default_rng(0)
    for j in range(1, 13):
        p = [Fraction(int(a), 97) for a in rng.integers(0, 98, size=j)]
        for i in range(j + 1):
            assert O.poisson_binomial_cdf(p, i) == O.poisson_binomial_bruteforce(p, i)


def test_chebyshev_spot_value():
    p = [1 / (k + 1) for k in range(1, 101)]
    assert sum(p) == pytest.approx(4.197, abs=1e-3)
    b = O.chebyshev_r_bound(p, 2)
    assert b == pytest.approx(0.411, abs=1e-3)
    assert b == pytest.approx(0.41058856579828956, rel=1e-12)


def test_chebyshev_guard():
    assert O.chebyshev_r_bound([0.1] * 10, 3) is None


def test_chebyshev_dominates():
    for j in (5, 50, 200):
        p = [1 / (k + 1) for k in range(1, j + 1)]
        for i in range(1, j + 1):
            b = O.chebyshev_r_bound(p, i)
            if b is not None:
                assert b >= O.poisson_binomial_cdf(p, i - 1) - 1e-15


def test_nonisomorphic_counts():
    # OEIS A000055: 1, 1, 1, 2, 3, 6, 11, 23
    assert [len(list(O.nonisomorphic_trees(n))) for n in range(1, 9)] == [1, 1, 1, 2, 3, 6, 11, 23]


def test_self_check_ok():
    rep = O.self_check(max_n=6, n_random=8, random_max=60)
    assert rep["ok"] is True
    assert all(v["ok"] for k, v in rep.items() if isinstance(v, dict))
