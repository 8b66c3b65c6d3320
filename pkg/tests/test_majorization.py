import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from majorlab.ensembles import derive_substream, sorted_uniform_simplex_renyi
from majorlab.errors import ValidationError
from majorlab.majorization import convex_dominance_check, suffix_sums, tails_dominated, vidal_pi


def test_suffix_sum_examples():
    np.testing.assert_allclose(suffix_sums([0.5, 0.3, 0.2]), [1.0, 0.5, 0.2])
    assert suffix_sums([1.0]).tolist() == [1.0]
    with pytest.raises(ValidationError):
        suffix_sums([0.2, 0.8])


def test_suffix_total_is_one():
    for i in range(10_000):
        x = sorted_uniform_simplex_renyi(20, derive_substream(0, i))
        assert abs(suffix_sums(x)[0] - 1) <= 1e-12


def test_tails_examples():
    x, y = [0.5, 0.5], [1.0, 0.0]
    r = tails_dominated(x, y)
    assert not r.dominated and r.first_violation_k == 2
    np.testing.assert_allclose(r.suffix_x, [1, 0.5])
    np.testing.assert_allclose(r.suffix_y, [1, 0])
    assert tails_dominated(y, x).dominated

    r = tails_dominated([0.5, 0.3, 0.2], [0.6, 0.2, 0.2])
    assert r.first_violation_k == 2
    assert tails_dominated([0.6, 0.2, 0.2], [0.5, 0.3, 0.2]).dominated


def test_reflexive():
    x = [0.4, 0.35, 0.25]
    assert tails_dominated(x, x).dominated


def test_length_mismatch():
    with pytest.raises(ValidationError):
        tails_dominated([1.0], [0.5, 0.5])
    with pytest.raises(ValidationError):
        vidal_pi([1.0], [0.5, 0.5])


def test_unequal_totals_compare_k1():
    assert tails_dominated([2.0], [1.0], equal_totals=False).first_violation_k == 1


def test_vidal_examples():
    assert vidal_pi([0.5, 0.5], [0.5, 0.5]) == 1.0
    assert vidal_pi([1.0, 0.0], [0.5, 0.5]) == 0.0
    assert vidal_pi([0.5, 0.5], [1.0, 0.0]) == 1.0
    with pytest.raises(ValidationError):
        vidal_pi([0.6, 0.6], [0.5, 0.5])


def test_convex_dominance_examples():
    # (0.5, 0.5) is majorised by (1, 0)
    assert convex_dominance_check([0.5, 0.5], [1.0, 0.0], lambda t: t**2)
    x, y = np.array([0.5, 0.3, 0.2]), np.array([0.7, 0.2, 0.1])
    assert abs(np.sum(3 * x + 1) - np.sum(3 * y + 1)) <= 1e-12


def averaged_pair(y, i):
    """Average entries i and i+1 of y: the result is majorised by y."""
    x = y.copy()
    x[i] = x[i + 1] = 0.5 * (y[i] + y[i + 1])
    return x


def test_convex_dominance_random_pairs():
    rng = np.random.default_rng(0)
    for j in range(1000):
        y = sorted_uniform_simplex_renyi(6, derive_substream(1, j)).values
        x = averaged_pair(y, int(rng.integers(0, 5)))
        # averaging leaves some tails equal up to the last bit
        assert tails_dominated(y, x, tol=1e-12).dominated
        assert convex_dominance_check(x, y, lambda t: t**4)


simplex = st.integers(2, 30).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, 2**63 - 1)))


def _pair(n, seed):
    return (sorted_uniform_simplex_renyi(n, derive_substream(seed, 0)).values,
            sorted_uniform_simplex_renyi(n, derive_substream(seed, 1)).values)


@settings(max_examples=200, deadline=None)
@given(simplex)
def test_pi_in_unit_interval_and_one_iff_reverse(ns):
    x, y = _pair(*ns)
    pi = vidal_pi(x, y)
    assert 0.0 <= pi <= 1.0
    assert (pi == 1.0) == tails_dominated(y, x).dominated


@settings(max_examples=200, deadline=None)
@given(simplex)
def test_report_consistency(ns):
    x, y = _pair(*ns)
    r = tails_dominated(x, y)
    assert r.dominated == (r.first_violation_k is None)


@settings(max_examples=100, deadline=None)
@given(simplex)
def test_mutual_dominance_means_equal_tails(ns):
    x, _ = _pair(*ns)
    assert tails_dominated(x, x).dominated
    np.testing.assert_allclose(suffix_sums(x), suffix_sums(x.copy()), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(simplex, st.integers(0, 28))
def test_convex_battery_on_dominated_pairs(ns, i):
    n, seed = ns
    assume(i < n - 1)
    y = sorted_uniform_simplex_renyi(n, derive_substream(seed, 2)).values
    x = averaged_pair(y, i)
    med = float(np.median(y))
    battery = [lambda t: t**2, lambda t: t**4, lambda t: t**8, lambda t: np.abs(t - med), np.exp]
    for f in battery:
        assert convex_dominance_check(x, y, f)


def test_single_k_symmetry():
    trials, k = 20_000, 10
    hits = 0
    for i in range(trials):
        x, y = _pair(32, 10_000 + i)
        hits += suffix_sums(x)[k] <= suffix_sums(y)[k]
    p = hits / trials
    assert abs(p - 0.5) <= 3 * np.sqrt(0.25 / trials)
