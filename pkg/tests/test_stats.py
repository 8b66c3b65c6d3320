import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from majorlab.eigensolve import Spectrum
from majorlab.ensembles import EnsembleParams, derive_substream, trace_normalise, wishart_spectrum
from majorlab.errors import DegenerateInputError, ValidationError
from majorlab.limitlaws import gamma_mp, Monomial
from majorlab.stats import (
    MomentSummary,
    accumulate_moments,
    clt_diagnostic,
    cor_normalized_statistic,
    eigenvalue_concentration_probe,
    fit_power_law,
    iterated_partial_sums,
    linear_statistics,
    persistence_probability,
    singular_lower_bound_probe,
    trace_tail_probe,
)


def spectrum(n, m, seed, i=0):
    return wishart_spectrum(EnsembleParams(n, m), derive_substream(seed, i)).spectrum


def test_linear_statistics_examples():
    s = Spectrum(np.array([2.0, 1.0]), 2, 2)
    assert linear_statistics(s, [2], "raw")[0] == pytest.approx(1.25)
    assert linear_statistics(spectrum(10, 15, 1), [1], "normalised")[0] == pytest.approx(1.0, abs=1e-12)
    flat = Spectrum(np.full(4, 9.0), 4, 9)
    assert np.all(linear_statistics(flat, [1, 2, 3], "shifted") == 0)


def test_linear_statistics_mode_checks():
    s = Spectrum(np.array([2.0, 1.0]), 2, 0)
    with pytest.raises(ValidationError):
        linear_statistics(s, [1], "shifted")
    with pytest.raises(ValidationError):
        linear_statistics(s, [1], "bogus")


def test_linear_statistics_accepts_simplex_vectors():
    w = wishart_spectrum(EnsembleParams(6, 9), derive_substream(2, 0))
    x = trace_normalise(w)
    np.testing.assert_allclose(linear_statistics(x, [2], "normalised"), linear_statistics(w.spectrum, [2], "normalised"))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**63 - 1))
def test_centered_first_statistic_vanishes(n, m, seed):
    s = spectrum(n, m, seed)
    assert abs(linear_statistics(s, [1], "centered", n=len(s.values))[0]) <= 1e-12


def test_cor_normalized_examples():
    EX1, EX2, n = 3.0, 20.0, 50
    assert cor_normalized_statistic(EX2 / EX1**2, EX2, 2, n, EX1=EX1) == pytest.approx(0.0, abs=1e-12)
    assert cor_normalized_statistic(1.0, EX1, 1, n, EX1=EX1) == 0.0
    with pytest.raises(DegenerateInputError):
        cor_normalized_statistic(1.0, 0.0, 1, n, EX1=1.0)
    with pytest.raises(ValidationError):
        cor_normalized_statistic(1.0, 1.0, 3, n, m=100)


def test_cor_normalized_centered_by_calibration_run():
    n = m = 256
    trials = 10_000
    # calibration and measurement runs use disjoint stream ids
    calib = np.array([linear_statistics(spectrum(n, m, 5, i), [1, 2], "raw") for i in range(trials)])
    EX1, EX2 = calib.mean(axis=0)
    Y2 = np.array([linear_statistics(spectrum(n, m, 5, trials + i), [2], "normalised")[0] for i in range(trials)])
    z = cor_normalized_statistic(Y2, EX2, 2, n, EX1=EX1)
    assert abs(z.mean()) <= 3 * z.std(ddof=1) / math.sqrt(trials)
    # asymptotic mean for comparison
    assert EX2 / n == pytest.approx(gamma_mp(Monomial(2), 1.0), rel=0.01)


def test_moments_examples():
    s = MomentSummary(2)
    for _ in range(5):
        s.accumulate([3.0, -1.0])
    assert np.all(s.covariance == 0)
    s = MomentSummary(2)
    accumulate_moments(s, [0, 0])
    accumulate_moments(s, [2, 2])
    np.testing.assert_allclose(s.mean, [1, 1])
    # divisor count - 1 gives 2; the divisor-count convention gives 1
    np.testing.assert_allclose(s.covariance, np.full((2, 2), 2.0))
    np.testing.assert_allclose(s.population_covariance, np.ones((2, 2)))
    with pytest.raises(ValidationError):
        s.accumulate([1, 2, 3])


def test_moments_merge_equals_concatenation():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(1000, 3)) * [1, 10, 0.1] + [5, -2, 0]
    a, b, full = MomentSummary(3), MomentSummary(3), MomentSummary(3)
    for row in data[:400]:
        a.accumulate(row)
    for row in data[400:]:
        b.accumulate(row)
    for row in data:
        full.accumulate(row)
    merged = a.merge(b)
    np.testing.assert_allclose(merged.mean, full.mean, rtol=1e-9)
    np.testing.assert_allclose(merged.covariance, full.covariance, rtol=1e-9)
    np.testing.assert_allclose(MomentSummary.from_array(data).covariance, np.cov(data, rowvar=False), rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1))
def test_moments_order_invariant(n, seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, 2)) * 3 + 1
    a, b = MomentSummary(2), MomentSummary(2)
    for row in data:
        a.accumulate(row)
    for row in data[rng.permutation(n)]:
        b.accumulate(row)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a.covariance, b.covariance, rtol=1e-9, atol=1e-12)
    assert np.allclose(a.covariance, a.covariance.T) and np.all(np.diag(a.covariance) >= 0)


def test_clt_diagnostic_examples():
    rng = np.random.default_rng(1)
    d = clt_diagnostic(rng.normal(size=(100_000, 1)))
    assert d.ks_pvalue[0] > 0.01 and abs(d.skewness[0]) < 0.05
    d = clt_diagnostic(rng.exponential(size=(100_000, 1)))
    assert d.skewness[0] == pytest.approx(2.0, abs=0.1)
    d = clt_diagnostic(np.column_stack([np.full(2000, 3.0), rng.normal(size=2000)]))
    assert d.degenerate.tolist() == [True, False]
    with pytest.raises(ValidationError):
        clt_diagnostic(np.zeros((10, 1)))


def test_clt_diagnostic_covariance_comparison():
    rng = np.random.default_rng(2)
    data = rng.multivariate_normal([0, 0], [[2, 1], [1, 3]], size=50_000)
    d = clt_diagnostic(data, [[2, 1], [1, 3]])
    assert d.covariance_rel_error.max() < 0.05


def test_iterated_partial_sums_examples():
    assert iterated_partial_sums([1, 1, 1]).tolist() == [1, 3, 6]
    assert iterated_partial_sums([1, -1]).tolist() == [1, 1]
    w = np.random.default_rng(3).normal(size=100)
    direct = np.array([sum(sum(w[: j + 1]) for j in range(q + 1)) for q in range(100)])
    np.testing.assert_allclose(iterated_partial_sums(w), direct, rtol=1e-12, atol=1e-12)
    weighted = np.array([sum((q - i + 1) * w[i - 1] for i in range(1, q + 1)) for q in range(1, 101)])
    np.testing.assert_allclose(iterated_partial_sums(w), weighted, rtol=1e-12, atol=1e-12)


def test_persistence_single_step_symmetry():
    r = persistence_probability([1], 10_000, 0.0, "gaussian", seed=1)
    assert abs(r.probabilities[0] - 0.5) <= 3 * r.stderrs[0]


def test_persistence_monotone_and_bounded():
    r = persistence_probability([1, 4, 16, 64, 256], 2000, 1.0, "exponential-difference", seed=2)
    assert np.all(np.diff(r.probabilities) <= 0)
    assert np.all((r.probabilities >= 0) & (r.probabilities <= 1))
    with pytest.raises(ValidationError):
        persistence_probability([4], 10, 1.0)
    with pytest.raises(ValidationError):
        persistence_probability([4], 1000, 1.0, "cauchy")


@pytest.mark.slow
@pytest.mark.parametrize("driver", ["gaussian", "exponential-difference"])
def test_persistence_exponent(driver):
    r = persistence_probability([2**k for k in range(8, 14)], 20_000, 1.0, driver, seed=3)
    fit = fit_power_law(r.N_values, r.probabilities, r.stderrs)
    assert abs(fit.theta - 0.25) <= 0.08


def test_power_law_exact_fits():
    n = np.array([8, 16, 32, 64])
    assert fit_power_law(n, n**-0.5, np.zeros(4)).theta == pytest.approx(0.5, abs=1e-10)
    fit = fit_power_law(n, np.full(4, 0.3))
    assert fit.theta == pytest.approx(0.0, abs=1e-10)
    assert 0 <= fit.r_squared <= 1 and fit.stderr >= 0


def test_power_law_excludes_zero_cells():
    fit = fit_power_law([8, 16, 32, 64], [0.5, 0.35, 0.25, 0.0], [0.01, 0.01, 0.01, 0.0])
    assert fit.excluded == (64.0,)
    with pytest.raises(ValidationError):
        fit_power_law([8, 16, 32], [0.5, 0.0, 0.0])


def test_power_law_synthetic_noise():
    rng = np.random.default_rng(4)
    n = np.array([2**k for k in range(7, 14)])
    trials = 100_000
    thetas = []
    for _ in range(20):
        p = rng.binomial(trials, 0.9 * n**-0.41) / trials
        se = np.sqrt(p * (1 - p) / trials)
        thetas.append(fit_power_law(n, p, se).theta)
    assert all(0.31 <= t <= 0.51 for t in thetas)


def test_trace_tail_probe():
    n, m = 32, 64
    tab = trace_tail_probe(n, m, [0.0, 4 * math.sqrt(m * n)], 20_000, seed=5)
    assert tab.exceedance[0] == 1.0
    assert tab.exceedance[1] <= 0.01
    assert abs(tab.mean - m * n) <= 0.01 * m * n
    with pytest.raises(ValidationError):
        trace_tail_probe(n, m, [1.0], 10)


def test_concentration_probe():
    assert eigenvalue_concentration_probe(8, 16, 1 - 1e-12, 50) == pytest.approx(1.0, abs=0.05)
    with pytest.raises(ValidationError):
        eigenvalue_concentration_probe(8, 4, 0.3, 10)


def test_singular_probe():
    rep = singular_lower_bound_probe(50, 100, 300, seed=6)
    assert rep.mean_sigma_min > 0.1 * (math.sqrt(100) - math.sqrt(49))
    assert rep.mean_sigma_max <= math.sqrt(100) + 4 * math.sqrt(50)
    sq = singular_lower_bound_probe(64, 64, 2000, seed=7)
    assert sq.exp_ks_pvalue > 0.01
    # n * mu_min is Exp(1) when E|G_ij|^2 = 1
    assert sq.exp_rate == pytest.approx(1.0, rel=0.1)
