"""Linear eigenvalue statistics, moment accumulation, CLT diagnostics, persistence and probes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from .eigensolve import Spectrum
from .ensembles import (
    EnsembleParams,
    SimplexVector,
    derive_substream,
    laguerre_bidiagonal_squares,
    wishart_spectrum,
)
from .errors import DegenerateInputError, ValidationError
from .limitlaws import as_test_function

SCALING_MODES = ("raw", "shifted", "normalised", "centered")


# ---------------------------------------------------------------------------
# linear statistics


def scaled_eigenvalues(spectrum, mode: str, n: Optional[int] = None, m: Optional[int] = None) -> np.ndarray:
    """Eigenvalues in one of the four scalings.

    raw: mu / n; shifted: (mu - m) / (2 sqrt(mn)); normalised: mu / sum(mu);
    centered: normalised - 1/n. ``n`` and ``m`` default to those recorded on a
    :class:`Spectrum`.
    """
    if mode not in SCALING_MODES:
        raise ValidationError(f"unknown scaling mode {mode!r}")
    vals = np.asarray(getattr(spectrum, "values", spectrum), dtype=np.float64)
    if n is None:
        n = getattr(spectrum, "n", None) or len(vals)
    if m is None:
        m = getattr(spectrum, "m", 0)
    if mode == "raw":
        return vals / n
    if mode == "shifted":
        if not m or m <= 0:
            raise ValidationError("shifted mode needs a positive m")
        return (vals - m) / (2.0 * math.sqrt(m * n))
    total = vals.sum()
    if not total > 0:
        raise DegenerateInputError("cannot normalise a spectrum with zero trace")
    lam = vals if isinstance(spectrum, SimplexVector) else vals / total
    if mode == "normalised":
        return lam
    return lam - 1.0 / n


def linear_statistics(spectrum, functions: Sequence, mode: str = "raw", n: Optional[int] = None, m: Optional[int] = None) -> np.ndarray:
    """Vector of sum_k f_i(scaled eigenvalue k), one entry per function.

    Integers in ``functions`` stand for monomials.
    """
    x = scaled_eigenvalues(spectrum, mode, n, m)
    return np.array([float(np.sum(as_test_function(f)(x))) for f in functions])


def cor_normalized_statistic(Y, EX, degree: int, n: int, EX1=None, m: Optional[int] = None):
    """Normalised power-sum statistic whose fluctuations have an n-free limit.

    With ``m`` unset (finite aspect ratio): n (Y_i (E X_1)^i / E X_i - 1).
    With ``m`` set (imbalanced regime, centered powers of even degree j):
    n (Y_j (mn/4)^(j/2) / E X_j - 1).
    """
    Y = np.asarray(Y, dtype=np.float64)
    if m is None:
        if EX1 is None:
            raise ValidationError("finite-ratio normalisation needs E X_1")
        scale = float(EX1) ** degree
    else:
        if degree % 2:
            raise ValidationError("imbalanced normalisation is defined for even degrees")
        scale = (m * n / 4.0) ** (degree // 2)
    if EX == 0 or not np.isfinite(EX):
        raise DegenerateInputError("E X_i is zero or non-finite")
    return n * (Y * scale / EX - 1.0)


# ---------------------------------------------------------------------------
# moments


@dataclass
class MomentSummary:
    """Running count, mean and co-moment matrix; covariance uses divisor count - 1."""

    dim: int
    count: int = 0
    mean: np.ndarray = None
    comoment: np.ndarray = None

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self.comoment is None:
            self.comoment = np.zeros((self.dim, self.dim))

    @property
    def covariance(self) -> np.ndarray:
        if self.count < 2:
            return np.full((self.dim, self.dim), np.nan)
        c = self.comoment / (self.count - 1)
        return 0.5 * (c + c.T)

    @property
    def population_covariance(self) -> np.ndarray:
        if self.count < 1:
            return np.full((self.dim, self.dim), np.nan)
        c = self.comoment / self.count
        return 0.5 * (c + c.T)

    def accumulate(self, x) -> "MomentSummary":
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.dim:
            raise ValidationError(f"observation has dimension {x.size}, expected {self.dim}")
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.comoment = self.comoment + np.outer(delta, x - self.mean)
        return self

    def merge(self, other: "MomentSummary") -> "MomentSummary":
        if other.dim != self.dim:
            raise ValidationError("cannot merge summaries of different dimension")
        if other.count == 0:
            return MomentSummary(self.dim, self.count, self.mean.copy(), self.comoment.copy())
        if self.count == 0:
            return MomentSummary(other.dim, other.count, other.mean.copy(), other.comoment.copy())
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        com = self.comoment + other.comoment + np.outer(delta, delta) * (self.count * other.count / n)
        return MomentSummary(self.dim, n, mean, com)

    @classmethod
    def from_array(cls, data) -> "MomentSummary":
        """Two-pass summary of a (count, dim) array."""
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        mean = data.mean(axis=0)
        d = data - mean
        return cls(data.shape[1], data.shape[0], mean, d.T @ d)


def accumulate_moments(summary: MomentSummary, x) -> MomentSummary:
    return summary.accumulate(x)


# ---------------------------------------------------------------------------
# CLT diagnostics


@dataclass
class CLTDiagnostic:
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    ks_statistic: np.ndarray
    ks_pvalue: np.ndarray
    degenerate: np.ndarray
    covariance_rel_error: Optional[np.ndarray] = None


def clt_diagnostic(samples, target_covariance=None, min_samples: int = 1000) -> CLTDiagnostic:
    """Marginal normality checks on each column after studentisation.

    Columns with (relative) zero spread are flagged degenerate and get NaN
    statistics. ``target_covariance`` adds entrywise relative errors of the
    sample covariance.
    """
    data = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if data.shape[0] == 1 and data.shape[1] > 1:
        data = data.T
    if data.shape[0] < min_samples:
        raise ValidationError(f"need at least {min_samples} samples, got {data.shape[0]}")
    d = data.shape[1]
    mean = data.mean(axis=0)
    sd = data.std(axis=0, ddof=1)
    degenerate = sd <= 1e-12 * (1.0 + np.abs(mean))
    skew = np.full(d, np.nan)
    kurt = np.full(d, np.nan)
    ks_d = np.full(d, np.nan)
    ks_p = np.full(d, np.nan)
    for j in range(d):
        if degenerate[j]:
            continue
        z = (data[:, j] - mean[j]) / sd[j]
        skew[j] = sps.skew(z)
        kurt[j] = sps.kurtosis(z)
        res = sps.kstest(z, "norm")
        ks_d[j], ks_p[j] = res.statistic, res.pvalue
    rel = None
    if target_covariance is not None:
        target = np.asarray(target_covariance, dtype=np.float64)
        emp = np.cov(data, rowvar=False).reshape(d, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(emp - target) / np.abs(target)
    return CLTDiagnostic(skew, kurt, ks_d, ks_p, degenerate, rel)


# ---------------------------------------------------------------------------
# persistence


def iterated_partial_sums(w) -> np.ndarray:
    """S_q = sum_{j<=q} sum_{i<=j} W_i."""
    return np.cumsum(np.cumsum(np.asarray(w, dtype=np.float64)))


def persistence_increments(n: int, driver: str, stream) -> np.ndarray:
    if driver == "gaussian":
        return stream.normal(n)
    if driver == "exponential-difference":
        z = stream.exponential(2 * n)
        return z[:n] - z[n:]
    raise ValidationError(f"unknown persistence driver {driver!r}")


def persistence_exit(n_max: int, t: float, driver: str, stream) -> int:
    """First q (1-based) with S_q >= t, or n_max + 1 if the path survives."""
    s = iterated_partial_sums(persistence_increments(n_max, driver, stream))
    hit = np.flatnonzero(s >= t)
    return int(hit[0]) + 1 if hit.size else n_max + 1


@dataclass
class PersistenceResult:
    N_values: list
    probabilities: np.ndarray
    stderrs: np.ndarray
    t: float
    trials: int
    survivors: np.ndarray = field(default=None)


def survival_from_exits(exits, N_values, t: float) -> PersistenceResult:
    exits = np.asarray(exits)
    N_values = [int(v) for v in N_values]
    trials = exits.size
    surv = np.array([int(np.sum(exits > N)) for N in N_values])
    p = surv / trials
    se = np.sqrt(p * (1.0 - p) / trials)
    return PersistenceResult(N_values, p, se, float(t), trials, surv)


def persistence_probability(N_values, trials: int, t: float = 1.0, driver: str = "gaussian", seed: int = 0, min_trials: int = 1000) -> PersistenceResult:
    """Pr[S_q < t for all q <= N] for every N, all cutoffs read off the same paths.

    Trial i draws its increments from ``derive_substream(seed, i)``.
    """
    if trials < min_trials:
        raise ValidationError(f"persistence needs at least {min_trials} trials")
    N_values = sorted(int(v) for v in N_values)
    n_max = N_values[-1]
    exits = np.array([persistence_exit(n_max, t, driver, derive_substream(seed, i)) for i in range(trials)])
    return survival_from_exits(exits, N_values, t)


# ---------------------------------------------------------------------------
# power laws


@dataclass(frozen=True)
class PowerLawFit:
    """p ~ A n^(-theta)."""

    theta: float
    stderr: float
    r_squared: float
    log_prefactor: float
    excluded: tuple = ()

    def predict(self, n):
        return np.exp(self.log_prefactor) * np.asarray(n, dtype=np.float64) ** (-self.theta)


def fit_power_law(n_values, probabilities, stderrs=None) -> PowerLawFit:
    """Weighted least squares of log p on log n with delta-method weights (se/p).

    Points with p <= 0 are dropped and listed in ``excluded``. When no
    standard errors are given (or any is zero) the fit is unweighted and the
    slope error comes from the residuals.
    """
    n = np.asarray(n_values, dtype=np.float64)
    p = np.asarray(probabilities, dtype=np.float64)
    se = None if stderrs is None else np.asarray(stderrs, dtype=np.float64)
    keep = p > 0
    excluded = tuple(float(v) for v in n[~keep])
    n, p = n[keep], p[keep]
    if se is not None:
        se = se[keep]
    if n.size < 3:
        raise ValidationError("power-law fit needs at least 3 points with positive probability")
    x, y = np.log(n), np.log(p)
    known = se is not None and np.all(se > 0)
    w = (p / se) ** 2 if known else np.ones_like(x)
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    ss_res = float(np.sum(w * resid**2))
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    if known:
        var_slope = cov[1, 1]
    else:
        dof = max(n.size - 2, 1)
        var_slope = cov[1, 1] * ss_res / dof
    if ss_tot <= 1e-300:
        r2 = 1.0 if ss_res <= 1e-20 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return PowerLawFit(-float(beta[1]), float(math.sqrt(max(var_slope, 0.0))), r2, float(beta[0]), excluded)


# ---------------------------------------------------------------------------
# probes


@dataclass
class TraceTailTable:
    n: int
    m: int
    t_values: np.ndarray
    exceedance: np.ndarray
    bound_shape: np.ndarray
    mean: float
    variance: float
    trials: int


def sample_traces(n: int, m: int, trials: int, seed: int) -> np.ndarray:
    """Traces of G G^dagger through the bidiagonal model (sum of squared entries)."""
    p = EnsembleParams(n, m)
    out = np.empty(trials)
    for i in range(trials):
        d, e = laguerre_bidiagonal_squares(p, derive_substream(seed, i))
        out[i] = d.sum() + e.sum()
    return out


def trace_tail_probe(n: int, m: int, t_values, trials: int, seed: int = 0, min_trials: int = 1000) -> TraceTailTable:
    """Empirical Pr[|tr - mn| > t] next to exp(-min(t^2/(4mn), t/4)).

    The trace is a sum of mn unit exponentials, so the comparison curve is a
    Bernstein bound for that sum up to its absolute constant.
    """
    if trials < min_trials:
        raise ValidationError(f"trace probe needs at least {min_trials} trials")
    tr = sample_traces(n, m, trials, seed)
    t = np.asarray(t_values, dtype=np.float64)
    dev = np.abs(tr - m * n)
    exc = np.array([np.mean(dev > tv) if tv > 0 else 1.0 for tv in t])
    bound = 2.0 * np.exp(-np.minimum(t**2 / (4.0 * m * n), t / 4.0))
    return TraceTailTable(n, m, t, exc, np.minimum(bound, 1.0), float(tr.mean()), float(tr.var(ddof=1)), trials)


def concentration_gap(n: int, m: int, trial: int, seed: int, sampler: str = "auto") -> float:
    """max_k |mu1_k / mu2_k - 1| over an independent pair of spectra."""
    p = EnsembleParams(n, m)
    a = wishart_spectrum(p, derive_substream(seed, 2 * trial), sampler).spectrum.values
    b = wishart_spectrum(p, derive_substream(seed, 2 * trial + 1), sampler).spectrum.values
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(a / b - 1.0)
    r = np.where(np.isnan(r), 0.0, r)
    return float(r.max())


def eigenvalue_concentration_probe(n: int, m: int, eps: float, trials: int, seed: int = 0, sampler: str = "auto") -> float:
    """Fraction of independent pairs with (1-eps) mu2_k <= mu1_k <= (1+eps) mu2_k for all k."""
    if m < n:
        raise ValidationError("concentration probe needs m >= n")
    gaps = np.array([concentration_gap(n, m, i, seed, sampler) for i in range(trials)])
    return float(np.mean(gaps <= eps))


@dataclass
class SingularReport:
    n: int
    m: int
    mean_sigma_min: float
    mean_sigma_max: float
    lower_reference: float
    upper_reference: float
    exp_rate: Optional[float] = None
    exp_ks_pvalue: Optional[float] = None
    unit_rate_ks_pvalue: Optional[float] = None


def singular_lower_bound_probe(n: int, m: int, trials: int, seed: int = 0) -> SingularReport:
    """Extreme singular values of G against sqrt(m) -/+ O(sqrt(n)).

    For n = m the law of n * mu_min is tested for exponential shape, both with
    a fitted rate and against rate 1.
    """
    if m < n:
        raise ValidationError("singular value probe needs m >= n")
    p = EnsembleParams(n, m)
    smin = np.empty(trials)
    smax = np.empty(trials)
    for i in range(trials):
        vals = wishart_spectrum(p, derive_substream(seed, i)).spectrum.values
        smax[i], smin[i] = vals[0], vals[-1]
    rep = SingularReport(
        n, m,
        float(np.sqrt(smin).mean()), float(np.sqrt(smax).mean()),
        math.sqrt(m) - math.sqrt(n - 1), math.sqrt(m) + 4.0 * math.sqrt(n),
    )
    if n == m:
        x = n * smin
        scale = float(x.mean())
        rep.exp_rate = 1.0 / scale
        rep.exp_ks_pvalue = float(sps.kstest(x, "expon", args=(0, scale)).pvalue)
        rep.unit_rate_ks_pvalue = float(sps.kstest(x, "expon").pvalue)
    return rep
