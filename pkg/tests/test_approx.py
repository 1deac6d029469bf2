import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from conftest import TOY_A_W, random_instances
from genperm.approx import (approx_test_from_sample, as_perm_array, bernstein_generic,
                            bernstein_test_value, chi, compositions_array, concentration_tail,
                            convergence_envelope, enumerate_compositions, multinomial_kernel,
                            n_compositions, sample_scan, uniform_class_probabilities)
from genperm.errors import CompositionLimit, DiscontinuityPoint, EmptySample, InputError
from genperm.exact import RatioOrder, mp_test, scan_orbit
from genperm.densities import linear_exp_model
from genperm.perm import all_permutations, sample_uniform_array

X123 = np.array([1.0, 2.0, 3.0])
PHI = 0.05 / TOY_A_W[0]


@pytest.fixture
def scan_a(toy_a):
    return scan_orbit(X123, toy_a[2])


def test_full_sample_reproduces_exact(toy_a):
    order = toy_a[2]
    for x in (X123, np.array([1.0, 3.0, 2.0])):
        for alpha in (0.05, 0.3, 0.7):
            a = approx_test_from_sample(all_permutations(3), x, order, None, alpha)
            b = mp_test(scan_orbit(x, order), alpha)
            assert a.phi == pytest.approx(b.phi, abs=1e-15)
            np.testing.assert_allclose(a.weights, b.weights, rtol=1e-15)


def test_identity_appended(toy_a):
    sc = sample_scan([[1, 0, 2]], np.array([1.0, 3.0, 2.0]), toy_a[2])
    assert sc.identity_appended
    sc2 = sample_scan([[0, 1, 2], [0, 1, 2]], X123, toy_a[2])
    assert not sc2.identity_appended and sc2.k.tolist() == [2]
    assert sc2.weights.tolist() == [1.0]


def test_distinct_vs_draws_mass(toy_a):
    S = [[0, 1, 2], [0, 1, 2], [2, 1, 0]]
    d = sample_scan(S, X123, toy_a[2], class_mass="distinct")
    w = sample_scan(S, X123, toy_a[2], class_mass="draws")
    # identity class: k=2, one distinct member of mass e^3
    e = math.e
    np.testing.assert_allclose(d.weights, np.array([2 * e**3, e]) / (2 * e**3 + e))
    np.testing.assert_allclose(w.weights, d.weights)
    with pytest.raises(InputError):
        sample_scan(S, X123, toy_a[2], class_mass="other")


def test_draws_mass_exact_with_unequal_ties():
    x = np.array([1.0, 1.0, 2.0])
    order = RatioOrder.statistic(lambda X: X[:, 0])
    g0 = linear_exp_model([0.3, -0.2, 0.1])
    exact = mp_test(scan_orbit(x, order, g0), 0.2)
    approx = approx_test_from_sample(all_permutations(3), x, order, g0, 0.2, class_mass="draws")
    assert approx.phi == pytest.approx(exact.phi, abs=1e-14)


def test_empty_sample(toy_a):
    with pytest.raises(EmptySample):
        as_perm_array([], 3)


def test_sample_test_accuracy(toy_a):
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(300):
        S = sample_uniform_array(3, 200, rng)
        hits += abs(approx_test_from_sample(S, X123, toy_a[2], None, 0.05).phi - PHI) <= 0.05
    assert hits / 300 >= 0.95


def test_multinomial_kernel():
    p = np.array([0.2, 0.3, 0.5])
    K = compositions_array(4, 3)
    M = multinomial_kernel(K, p)
    np.testing.assert_allclose(M, stats.multinomial(4, p).pmf(K), rtol=1e-12)
    assert M.sum() == pytest.approx(1.0, abs=1e-14)
    assert multinomial_kernel([2, 0], [1.0, 0.0]) == 1.0


def test_compositions():
    comps = list(enumerate_compositions(3, 3))
    assert len(comps) == n_compositions(3, 3) == 10
    assert comps == sorted(comps) and all(sum(c) == 3 for c in comps)
    assert n_compositions(200, 3) == 20301
    with pytest.raises(CompositionLimit):
        compositions_array(200, 3, limit=1000)


def test_bernstein_s2_hand_value(scan_a):
    assert bernstein_test_value(scan_a, None, 2, 0.05) == pytest.approx(0.477814, abs=1e-6)


def test_bernstein_reproduces_affine():
    p = np.array([0.1, 0.6, 0.3])
    f = lambda q: 2.0 + q @ [1.0, -3.0, 0.5]
    assert bernstein_generic(f, p, 5) == pytest.approx(f(p), abs=1e-12)
    assert bernstein_generic(lambda q: 7.0, p, 4) == pytest.approx(7.0)


def test_bernstein_binomial_moment():
    val = bernstein_generic(lambda q: q[0] ** 2, [0.5, 0.5], 10)
    assert val == pytest.approx(0.25 + 0.025, abs=1e-14)


def test_chi(scan_a):
    u = uniform_class_probabilities(scan_a)
    assert chi(u, scan_a, 0.05) == pytest.approx(PHI)
    assert chi([1.0, 0.0, 0.0], scan_a, 0.05) == pytest.approx(0.05)
    # r = 2 with p_r = 0 and the level exactly on the mass above the observed class
    scan2 = scan_orbit([1.0, 3.0, 2.0], RatioOrder.ratio(linear_exp_model([0, 0, 1]),
                                                         linear_exp_model([0, 0, 2])))
    p = np.array([0.3, 0.0, 0.7])
    wstar = p * scan2.class_weight / (p @ scan2.class_weight)
    with pytest.raises(DiscontinuityPoint):
        chi(p, scan2, math.fsum(wstar[:1]))
    assert chi(p, scan2, math.fsum(wstar[:1]) + 0.01) == 1.0
    assert chi(p, scan2, math.fsum(wstar[:1]) - 0.01) == 0.0
    with pytest.raises(InputError):
        chi([0.5, 0.6, -0.1], scan_a, 0.05)


def test_convergence_to_exact(scan_a):
    gaps = [abs(bernstein_test_value(scan_a, None, s, 0.05) - PHI) for s in (10, 50, 200)]
    assert gaps[0] + 1e-3 >= gaps[1] and gaps[1] + 1e-3 >= gaps[2]
    assert gaps[2] < 0.05
    u = uniform_class_probabilities(scan_a)
    for s, g in zip((10, 50, 200), gaps):
        assert g <= convergence_envelope(scan_a, u, s, 0.05)


@given(st.integers(1, 30), st.floats(0, 1), st.lists(st.floats(0.01, 1), min_size=3, max_size=3))
def test_bernstein_in_unit_interval(s, alpha, raw):
    order = RatioOrder.ratio(linear_exp_model([0, 0, 1]), linear_exp_model([0, 0, 2]))
    scan = scan_orbit([1.0, 3.0, 2.0], order)
    p = np.array(raw) / sum(raw)
    p = p / p.sum()
    v = bernstein_test_value(scan, p, s, alpha)
    assert 0.0 <= v <= 1.0


def test_concentration_tail_basics(scan_a):
    u = uniform_class_probabilities(scan_a)
    big = concentration_tail(scan_a, u, 20, 5.0)
    assert big.exact_tail == 0.0 and big.exact_tail_signed == 0.0
    t = concentration_tail(scan_a, u, 20, 0.2 * big.norm_p)
    assert t.exact_tail <= min(t.bernstein_bound, t.hoeffding_bound)
    t2 = concentration_tail(scan_a, u, 40, 0.2 * big.norm_p)
    assert math.log(t2.bernstein_bound / 2) == pytest.approx(2 * math.log(t.bernstein_bound / 2))
    assert concentration_tail(scan_a, u, 500, 0.1, limit=10).exact_tail is None


def test_signed_tail_within_bounds(scan_a):
    """The deviation the inequalities actually control stays under both bounds."""
    u = uniform_class_probabilities(scan_a)
    norm = float(u @ scan_a.class_weight)
    for s in (20, 50, 100, 200):
        for f in (0.1, 0.2, 0.3, 0.5):
            t = concentration_tail(scan_a, u, s, f * norm)
            assert t.exact_tail_signed <= min(t.bernstein_bound, t.hoeffding_bound)


@pytest.mark.parametrize("inst", random_instances(21, 6, (3, 4)), ids=lambda i: f"n{i.n}")
def test_bernstein_at_uniform_equals_exact(inst):
    scan = scan_orbit(inst.x, inst.order)
    p = uniform_class_probabilities(scan)
    exact = mp_test(scan, 0.2).phi
    assert chi(p, scan, 0.2) == pytest.approx(exact, abs=1e-12)
