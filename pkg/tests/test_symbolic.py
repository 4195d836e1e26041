import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwlab.symbolic import (EmptySubshiftError, Sft, ZeroSet, box_dimension, build_sft,
                            dyadic_value, enumerate_admissible, forbidden_words, golden_mean,
                            hausdorff_gap, index_word, isolate_zeros, metric_rho, neighbors,
                            spectral_radius, transitive_components, truncate_point, word_index,
                            zero_avoiding_sft)

PHI = (1 + math.sqrt(5)) / 2
words = st.text(alphabet="01", min_size=0, max_size=12)


def all_words(n):
    return ["".join(t) for t in itertools.product("01", repeat=n)]


def brute_admissible(forbidden, n):
    return [w for w in all_words(n) if not any(f in w for f in forbidden)]


# words and metric


def test_rho_examples():
    assert metric_rho("01", "01") == 0
    assert metric_rho("00", "01") == 0.5
    assert metric_rho("10", "00") == 1


@given(words, words, words)
def test_rho_ultrametric(a, b, c):
    assert metric_rho(a, c) <= max(metric_rho(a, b), metric_rho(b, c)) + 1e-15
    assert metric_rho(a, b) == metric_rho(b, a)


@given(words)
def test_index_roundtrip(w):
    assert index_word(word_index(w), len(w)) == w
    assert dyadic_value(w) == pytest.approx(word_index(w) / 2 ** len(w) if w else 0.0)


@pytest.mark.parametrize("w", ["01", "00", "11", "0110", "1"])
def test_neighbors_match_enumeration(w):
    n = len(w)
    lam = dyadic_value(w)
    expect = {u for u in all_words(n) if abs(dyadic_value(u) - lam) <= 2.0**-n + 1e-15}
    assert neighbors(w) == expect


def test_neighbors_examples():
    assert neighbors("01") == {"00", "01", "10"}
    assert neighbors("00") == {"00", "01"}
    assert neighbors("11") == {"10", "11"}


@given(st.floats(0, 1, exclude_max=True), st.integers(1, 20))
def test_truncate_point_contains_x(x, k):
    w = truncate_point(x, k)
    assert dyadic_value(w) <= x < dyadic_value(w) + 2.0**-k


# zero sets and forbidden words


def test_forbidden_examples():
    assert forbidden_words([0.5], 3) == {"011", "100"}
    assert forbidden_words([1 / 3], 2) == {"01"}
    assert forbidden_words([], 5) == set()


def test_forbidden_dyadic_endpoints():
    assert forbidden_words([0.0, 0.5, 1.0], 3) == {"000", "011", "100", "110", "111"}


def test_isolate_zeros_finds_third():
    z = isolate_zeros(lambda x: x - 1 / 3)
    assert len(z) == 1 and z.zeros[0] == pytest.approx(1 / 3, abs=1e-9)


def test_zeroset_validation():
    with pytest.raises(ValueError):
        ZeroSet((0.6, 0.4))
    with pytest.raises(ValueError):
        ZeroSet((1.5,))


# SFT construction


def test_golden_transition():
    np.testing.assert_array_equal(build_sft({"11"}, 2).transition, [[1, 1], [1, 0]])
    np.testing.assert_array_equal(Sft.full(2).transition, np.ones((2, 2)))


def test_depth3_zero_entries_one_per_forbidden_word():
    x = build_sft({"011", "100"}, 3)
    full = Sft.full(3)
    # only successor edges can carry a 1
    assert int(full.transition.sum() - x.transition.sum()) == 2


def test_components():
    assert len(transitive_components(Sft.full(2))) == 1
    comps = transitive_components(golden_mean())
    assert len(comps) == 1 and comps[0].active.sum() == 2
    per2 = transitive_components(build_sft({"00", "11"}, 2))
    assert len(per2) == 1
    assert spectral_radius(per2[0]) == pytest.approx(1.0)


@pytest.mark.parametrize("forbidden,k,rho", [
    (set(), 2, 2.0),
    ({"11"}, 2, PHI),
    ({"00", "11"}, 2, 1.0),
])
def test_spectral_radius(forbidden, k, rho):
    x = build_sft(forbidden, k)
    assert spectral_radius(x) == pytest.approx(rho, abs=1e-10)
    assert box_dimension(x) == pytest.approx(math.log2(rho), abs=1e-9)


@pytest.mark.parametrize("n,count", [(3, 5), (5, 13), (8, 55)])
def test_golden_counts_fibonacci(n, count):
    w = enumerate_admissible(golden_mean(), n)
    assert len(w) == count
    assert w == brute_admissible({"11"}, n)


def test_golden_level3_words():
    assert set(enumerate_admissible(golden_mean(), 3)) == {"000", "001", "010", "100", "101"}


@settings(max_examples=40, deadline=None)
@given(st.sets(st.text(alphabet="01", min_size=3, max_size=3), max_size=4), st.integers(1, 7))
def test_admissible_matches_brute_force(forbidden, n):
    x = build_sft(forbidden, 3)
    # the SFT keeps words that extend to bi-infinite orbits; the brute-force
    # list is a superset, equal once restricted to live extensions
    got = set(enumerate_admissible(x, n))
    assert got <= set(brute_admissible(forbidden, n))
    for w in got:
        assert any(not any(f in w + t for f in forbidden) for t in all_words(4))


@settings(max_examples=30, deadline=None)
@given(st.sets(st.text(alphabet="01", min_size=3, max_size=3), max_size=4))
def test_spectral_radius_vs_counts(forbidden):
    x = build_sft(forbidden, 3)
    if x.is_empty:
        return
    rho = spectral_radius(x)
    eig = max(abs(np.linalg.eigvals(x.adjacency.astype(float)))) if x.adjacency.size else 0.0
    assert rho == pytest.approx(eig, abs=1e-8)


# zero avoidance


def test_hausdorff_gap_examples():
    assert hausdorff_gap(Sft.full(2)) == 0.0
    assert hausdorff_gap(build_sft({"00", "11"}, 2)) >= 2.0**-3


@pytest.mark.parametrize("k", range(3, 9))
def test_hausdorff_gap_raw_avoiding_sft(k):
    raw = build_sft(forbidden_words([0.5], k), k)
    assert hausdorff_gap(raw) <= 2.0**-k


def test_avoiding_sft_monotone_in_k():
    prev = -1.0
    for k in range(3, 11):
        d = box_dimension(zero_avoiding_sft([0.5], k))
        assert d >= prev - 1e-12
        prev = d
    assert prev > 0.99


def test_avoiding_sft_words_clear_zero():
    x = zero_avoiding_sft([0.5], 6)
    for w in enumerate_admissible(x, 6):
        assert w not in forbidden_words([0.5], 6)


def test_empty_subshift_error():
    with pytest.raises(EmptySubshiftError):
        zero_avoiding_sft([0.0, 0.25, 0.5, 0.75, 1.0], 2)
