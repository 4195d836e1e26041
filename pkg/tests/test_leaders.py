import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwlab.leaders import (LeaderPyramid, concavify, default_window, leader_pyramid,
                           legendre_spectrum, pointwise_exponent, pointwise_exponents,
                           scaling_function, structure_functions)
from mwlab.symbolic import Sft
from mwlab.synthesis import build_coefficients, perturb
from mwlab.thermo import GibbsModel, Potential, tau_prime, wavelet_scaling_prediction

FULL = Sft.full(2)
ZERO = Potential.constant(0.0)
BERN = Potential.bernoulli(0.25)
Q = np.round(np.arange(-2, 4.0001, 0.25), 10)
H = np.round(np.arange(0, 1.5001, 0.005), 10)


def brute_leaders(levels):
    J = len(levels) - 1
    out = []
    for j in range(J + 1):
        row = []
        for k in range(2**j):
            best = 0.0
            for jj in range(j, J + 1):
                span = 2 ** (jj - j)
                best = max(best, float(np.max(np.abs(levels[jj][k * span:(k + 1) * span]))))
            row.append(best)
        out.append(np.array(row))
    return out


def geometric(J, h):
    return LeaderPyramid.from_levels([np.full(2**j, 2.0 ** (-j * h)) for j in range(J + 1)])


@pytest.fixture(scope="module")
def mono_pyr():
    gm = GibbsModel(FULL, ZERO)
    return leader_pyramid(perturb(build_coefficients(gm, 0.5, 4.0, 14, seed=0)))


@pytest.fixture(scope="module")
def bern_pyr():
    gm = GibbsModel(FULL, BERN)
    return leader_pyramid(perturb(build_coefficients(gm, 0.6, 2.0, 14, seed=0)))


# pyramid


def test_hand_example():
    p = LeaderPyramid.from_levels([[1.0], [0.5, 0.25], [0.3, 0.1, 0.2, 0.05]])
    assert p.level(1).tolist() == [0.5, 0.25]
    assert p.level(2)[0] == 0.3
    assert p.level(0)[0] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 7))
def test_pyramid_matches_brute_force(seed, J):
    rng = np.random.default_rng(seed)
    levels = [rng.normal(size=2**j) for j in range(J + 1)]
    p = LeaderPyramid.from_levels(levels)
    for a, b in zip(p.leaders, brute_leaders(levels)):
        np.testing.assert_array_equal(a, b)
        assert a.shape == b.shape
    # a parent never falls below its children
    for j in range(J):
        assert np.all(p.level(j) >= p.level(j + 1).reshape(-1, 2).max(axis=1))


def test_geometric_pyramid():
    p = geometric(10, 0.3)
    for j in range(11):
        np.testing.assert_allclose(p.level(j), 2.0 ** (-0.3 * j))


def test_single_spike_chain():
    J, k = 8, 77
    levels = [np.zeros(2**j) for j in range(J + 1)]
    levels[J][k] = 1.0
    p = LeaderPyramid.from_levels(levels)
    for j in range(J + 1):
        expect = np.zeros(2**j)
        expect[k >> (J - j)] = 1.0
        np.testing.assert_array_equal(p.level(j), expect)
    x0 = (k + 0.5) / 2**J
    assert pointwise_exponent(p, x0, (3, 8)) == pytest.approx(0.0, abs=1e-12)


def test_bad_level_shape():
    with pytest.raises(ValueError):
        LeaderPyramid.from_levels([[1.0], [1.0, 2.0, 3.0]])


# exponents


@given(st.floats(0.05, 1.5), st.floats(0, 1))
@settings(max_examples=30, deadline=None)
def test_geometric_exponent_exact(h, x0):
    assert pointwise_exponent(geometric(10, h), x0, (3, 10)) == pytest.approx(h, abs=1e-9)


def test_undefined_exponent_is_nan():
    p = LeaderPyramid.from_levels([np.zeros(2**j) for j in range(9)])
    assert np.isnan(pointwise_exponent(p, 0.3, (3, 8)))


def test_mono_median_exponent(mono_pyr):
    x0 = np.random.default_rng(1).random(1000)
    med = float(np.nanmedian(pointwise_exponents(mono_pyr, x0)))
    assert 0.45 <= med <= 0.55


def test_default_window():
    assert default_window(14) == (4, 12)
    lo, hi = default_window(6)
    assert 3 <= lo < hi <= 6


# scaling function


@given(st.floats(0.1, 1.2))
@settings(max_examples=20, deadline=None)
def test_geometric_scaling_exact(h):
    est = scaling_function(geometric(12, h), Q, (3, 12))
    np.testing.assert_allclose(est.xi_hat, Q * h - 1, atol=1e-9)
    np.testing.assert_allclose(est.r2, 1.0, atol=1e-9)


def test_structure_functions_finite_where_nonzero(bern_pyr):
    sf, counts = structure_functions(bern_pyr, Q, range(3, 15))
    assert np.all(counts > 0) and np.all(np.isfinite(sf))


def test_scaling_needs_three_levels():
    levels = [np.zeros(2**j) for j in range(9)]
    levels[4][3] = 1.0
    p = LeaderPyramid.from_levels(levels)
    with pytest.raises(ValueError, match="fewer than 3"):
        scaling_function(p, Q, (5, 8))


def test_mono_scaling(mono_pyr):
    est = scaling_function(mono_pyr, Q)
    assert np.max(np.abs(est.xi_hat - (0.5 * Q - 1))) <= 0.1


def test_bernoulli_scaling_at_two(bern_pyr):
    est = scaling_function(bern_pyr, Q)
    assert est.xi_hat[Q == 2][0] == pytest.approx(0.2, abs=0.1)
    pred = wavelet_scaling_prediction(FULL, BERN, 0.6, 2.0, Q).values
    assert np.max(np.abs(est.xi_hat - pred)) <= 0.12


def test_unperturbed_bernoulli_is_nearly_exact():
    gm = GibbsModel(FULL, BERN)
    p = leader_pyramid(build_coefficients(gm, 0.6, 2.0, 14, seed=0), use_perturbed=False)
    est = scaling_function(p, Q)
    pred = wavelet_scaling_prediction(FULL, BERN, 0.6, 2.0, Q).values
    assert np.max(np.abs(est.xi_hat - pred)) <= 0.02


def test_scaling_csv(tmp_path, mono_pyr):
    est = scaling_function(mono_pyr, Q)
    est.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "q,xi_hat,stderr,r2" and len(lines) == Q.size + 1


# Legendre spectrum


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=20))
def test_concavify_properties(vals):
    q = np.arange(len(vals), dtype=float)
    f = np.asarray(vals)
    g, change = concavify(q, f)
    assert np.all(np.diff(g, 2) <= 1e-9)
    assert change == pytest.approx(np.max(np.abs(g - f)))
    g2, c2 = concavify(q, g)
    np.testing.assert_allclose(g2, g, atol=1e-9)


def test_linear_spectrum_single_point():
    est = scaling_function(geometric(12, 0.5), Q, (3, 12))
    sp = legendre_spectrum(est, [0.4, 0.5, 0.6])
    assert sp.values[1] == pytest.approx(1.0, abs=1e-9)
    assert sp.values[0] == -np.inf and sp.values[2] == -np.inf


def test_bernoulli_spectrum(bern_pyr):
    est = scaling_function(bern_pyr, Q)
    sp = legendre_spectrum(est, H)
    h1 = 0.6 - 0.5 + tau_prime(FULL, BERN, 1.0) / 2
    assert sp(h1) == pytest.approx(0.81128, abs=0.1)
    assert sp.values.max() == pytest.approx(1.0, abs=0.05)


def test_mono_spectrum_peak(mono_pyr):
    sp = legendre_spectrum(scaling_function(mono_pyr, Q), H)
    assert sp.values.max() == pytest.approx(1.0, abs=0.05)
    assert abs(sp.grid[np.argmax(sp.values)] - 0.5) <= 0.02
