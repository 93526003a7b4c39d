import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import zeta

from warmnet.fitness import NodeStream, Tag
from warmnet.urn import (
    UncertifiedWinnerError,
    UrnInstance,
    q_epsilon,
    sample_winner_rubin,
    simulate_urn_batch,
    simulate_urn_steps,
    simulate_urns,
)


def _stream(seed=0, tag=Tag.URN, *key):
    return NodeStream(seed, tag, tuple(key))


def _winners(fit, beta, draws, seed=0, tol=1e-9):
    urn = UrnInstance(fit, beta)
    base = _stream(seed)
    return np.array([sample_winner_rubin(urn, base.child(r), tol).index for r in range(draws)])


def test_urn_instance_validation():
    with pytest.raises(ValueError):
        UrnInstance([], 1.5)
    with pytest.raises(ValueError):
        UrnInstance([0.5, 2.0], 1.5)
    with pytest.raises(ValueError):
        UrnInstance([1.0, math.inf], 1.5)
    with pytest.raises(ValueError):
        UrnInstance([1.0], 1.0)
    assert UrnInstance([1, 2, 3], 2).n_colors == 3


def test_zero_steps():
    w = simulate_urn_steps(UrnInstance([1, 5, 2], 1.5), 0, _stream())
    assert w.tolist() == [1, 1, 1]


@given(n=st.integers(0, 300), k=st.integers(1, 6), seed=st.integers(0, 2**64 - 1))
@settings(max_examples=30, deadline=None)
def test_conservation(n, k, seed):
    w = simulate_urn_steps(UrnInstance(np.arange(1, k + 1), 1.7), n, _stream(seed))
    assert w.sum() == k + n and w.min() >= 1


def test_simulation_deterministic_and_prefix_consistent():
    urn = UrnInstance([3, 1, 2], 1.5)
    a = simulate_urn_batch(urn, 500, _stream(4), 20)
    b = simulate_urn_batch(urn, 500, _stream(4), 20)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (20, 3)
    # a batch is the stack of its rows run separately
    rows = simulate_urns(np.tile(urn.fitnesses, (20, 1)), 1.5, 500, _stream(4))
    np.testing.assert_array_equal(a, rows)


def test_first_draw_probability():
    # one step: color i drawn with probability F_i / sum F
    fit = np.array([6.0, 1.0, 3.0])
    w = simulate_urn_batch(UrnInstance(fit, 1.5), 1, _stream(8), 20000)
    freq = (w - 1).mean(axis=0)
    p = fit / fit.sum()
    assert np.all(np.abs(freq - p) < 3 * np.sqrt(p * (1 - p) / 20000))


def test_symmetric_two_color_simulation():
    w = simulate_urn_batch(UrnInstance([1, 1], 2.0), 10**4, _stream(2, Tag.URN_SIM), 10**4)
    assert abs(np.mean(w[:, 0] > w[:, 1]) - 0.5) <= 0.02


def test_max_share_dominance_grows():
    urn = UrnInstance([1, 1, 1], 1.5)
    s = _stream(1, Tag.URN_SIM)
    short = simulate_urn_batch(urn, 10**3, s, 10**3)
    long = simulate_urn_batch(urn, 10**4, s, 10**3)
    assert np.mean((long.max(1) - 1) / 10**4 > 0.99) >= np.mean((short.max(1) - 1) / 10**3 > 0.99)


def test_overflow_guard():
    with pytest.raises(OverflowError):
        simulate_urns(np.ones((1, 2)), 200.0, 100, _stream())


def test_single_color():
    res = sample_winner_rubin(UrnInstance([5.0], 1.5), _stream())
    assert (res.index, res.certified_error, res.terms_used) == (0, 0.0, 0)


def test_certified_error_reported():
    res = sample_winner_rubin(UrnInstance([2, 1, 1, 3], 1.5), _stream(3), tol=1e-9)
    assert 0 <= res.certified_error <= 1e-9
    assert res.terms_used >= 4


def test_symmetric_two_color_winner():
    w = _winners([1, 1], 2.0, 10**4, seed=5)
    assert abs(np.mean(w == 0) - 0.5) <= 0.02


def test_uncertified_is_an_error():
    with pytest.raises(UncertifiedWinnerError):
        sample_winner_rubin(UrnInstance([1, 1, 1], 1.5), _stream(1), tol=1e-12, max_terms=4)


def test_tol_validation():
    with pytest.raises(ValueError):
        sample_winner_rubin(UrnInstance([1, 1], 1.5), _stream(), tol=0)


def test_matches_brute_force_race():
    # same exponentials, summed to a fixed deep truncation plus the mean tail
    fit = np.array([3.0, 1.0, 2.0, 1.0, 5.0])
    beta, depth = 1.5, 2**16
    ks = np.arange(1, depth + 1, dtype=np.int64)
    tail = zeta(beta, depth + 1)
    for r in range(60):
        s = _stream(11, Tag.URN, r)
        e = s.exponential(np.arange(5)[:, None], ks[None, :])
        t = (np.sum(e * ks.astype(float) ** -beta, axis=1) + tail) / fit
        assert sample_winner_rubin(UrnInstance(fit, beta), s, 1e-9).index == int(np.argmin(t))


def test_independent_race_oracle():
    # frequencies against a race built from numpy's own generator
    fit, beta, draws = np.array([4.0, 1.0]), 2.0, 4000
    rng = np.random.default_rng(12345)
    ks = np.arange(1, 2001, dtype=float)
    e = rng.exponential(size=(draws, 2, ks.size))
    t = (np.sum(e / ks**beta, axis=2) + zeta(beta, ks.size + 1)) / fit
    p_ref = np.mean(np.argmin(t, axis=1) == 0)
    p = np.mean(_winners(fit, beta, draws, seed=21) == 0)
    se = math.sqrt(2 * p_ref * (1 - p_ref) / draws)
    assert abs(p - p_ref) < 4 * se


def test_tolerance_does_not_change_winner():
    urn = UrnInstance([1, 2, 1, 1.5, 1], 1.5)
    for r in range(100):
        s = _stream(6, Tag.URN, r)
        assert sample_winner_rubin(urn, s, 1e-6).index == sample_winner_rubin(urn, s, 1e-12).index


def test_deterministic_given_stream():
    urn = UrnInstance([1.2, 1.0, 7.0], 1.5)
    s = _stream(9, Tag.URN, 3, 4)
    assert sample_winner_rubin(urn, s, 1e-6) == sample_winner_rubin(urn, s, 1e-6)


def test_scaling_leaves_winners_unchanged():
    fit = np.array([1.0, 3.0, 2.0, 1.0])
    base, scaled = UrnInstance(fit, 1.5), UrnInstance(fit * 4.0, 1.5)
    for r in range(200):
        s = _stream(2, Tag.URN, r)
        assert sample_winner_rubin(base, s).index == sample_winner_rubin(scaled, s).index


def test_permutation_equivariance():
    fit = np.array([4.0, 2.0, 1.0])
    perm = np.array([2, 0, 1])
    draws = 3000
    a = np.bincount(_winners(fit, 1.5, draws, seed=30), minlength=3)
    b = np.bincount(perm[_winners(fit[perm], 1.5, draws, seed=31)], minlength=3)
    table = np.vstack([a, b])
    table = table[:, table.sum(axis=0) > 0]
    assert stats.chi2_contingency(table).pvalue > 0.01


def test_huge_fitness_spread():
    fit = np.array([1.0, 1e15, 1.0, 3e14])
    res = sample_winner_rubin(UrnInstance(fit, 1.5), _stream(4))
    assert res.index in (1, 3) and res.certified_error <= 1e-9


def test_large_urn():
    fits = np.random.default_rng(0).pareto(0.2, size=2 * 3**8 + 1) + 1
    res = sample_winner_rubin(UrnInstance(fits, 1.5), _stream(1))
    assert res.certified_error <= 1e-9


@pytest.mark.parametrize("eps,beta", [(0.5, 2.0), (1.0, 2.0), (3.0, 2.0)])
def test_q_epsilon_beta_two(eps, beta):
    c = eps**-0.5
    assert q_epsilon(eps, beta, 1e-10) == pytest.approx(math.pi * c / math.sinh(math.pi * c), abs=1e-9)


@pytest.mark.parametrize("eps", [0.3, 1.0])
def test_q_epsilon_beta_four(eps):
    # prod (1 + c^4 / n^4) = (cosh(sqrt2 pi c) - cos(sqrt2 pi c)) / (2 pi^2 c^2)
    c = eps**-0.25
    x = math.sqrt(2) * math.pi * c
    ref = 2 * math.pi**2 * c**2 / (math.cosh(x) - math.cos(x))
    assert q_epsilon(eps, 4.0, 1e-10) == pytest.approx(ref, abs=1e-9)


def test_q_epsilon_brute_product():
    ns = np.arange(1, 2 * 10**6 + 1, dtype=float)
    ref = math.exp(-math.fsum(np.log1p(1 / (0.5 * ns**3))))
    assert q_epsilon(0.5, 3.0, 1e-10) == pytest.approx(ref, abs=1e-9)


def test_q_epsilon_limits_and_monotonicity():
    assert q_epsilon(1e-6, 1.5) < 1e-5
    for beta in (1.1, 1.5, 2.0, 3.0):
        assert 0 < q_epsilon(0.5, beta) < q_epsilon(1.0, beta) < 1
    with pytest.raises(ValueError):
        q_epsilon(0, 2)
    with pytest.raises(ValueError):
        q_epsilon(1, 1)
