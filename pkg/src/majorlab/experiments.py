"""Experiment configuration, deterministic parallel trial execution and reduction."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps

from . import limitlaws as ll
from .ensembles import (
    EnsembleParams,
    derive_substream,
    sorted_uniform_simplex_renyi,
    trace_normalise,
    wishart_spectrum,
    wishart_spectrum_dense,
    wishart_spectrum_fast,
)
from .errors import ConfigError, MajorlabError
from .majorization import suffix_sums, vidal_pi
from .stats import (
    MomentSummary,
    clt_diagnostic,
    fit_power_law,
    linear_statistics,
    persistence_exit,
    survival_from_exits,
)

EXPERIMENTS = (
    "nielsen-decay",
    "uniform-decay",
    "pi-dist",
    "clt-check",
    "quadrature-report",
    "persistence",
    "concentration",
)
WISHART_EXPERIMENTS = ("nielsen-decay", "pi-dist", "clt-check", "concentration")
MAJORIZATION_TOLS = (0.0, 1e-12)


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``m_rule`` is ``{"kind": "ratio", "c": ...}``, ``{"kind": "offset",
    "C_gap": ...}`` (m = n + ceil(C_gap sqrt(n log n))) or ``{"kind":
    "explicit", "m": [...]}``; it must be absent for the experiments that do
    not sample Wishart spectra.
    """

    experiment: str
    n_values: list
    trials: int = 1000
    seed: int = 0
    workers: int = 1
    m_rule: Optional[dict] = None
    sampler: str = "auto"
    validate_sampler: bool = False
    degrees: list = field(default_factory=lambda: [1, 2, 3])
    scaling: str = "raw"
    threshold: float = 1.0
    driver: str = "gaussian"
    eps: float = 0.3
    k_list: list = field(default_factory=lambda: [100, 200, 400])
    c_list: list = field(default_factory=lambda: [1.0, 4.0])
    out: Optional[str] = None
    per_trial_csv: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if isinstance(self.n_values, int):
            self.n_values = [self.n_values]
        self.n_values = [int(v) for v in self.n_values]
        if not self.n_values or any(v < 1 for v in self.n_values):
            raise ConfigError("n_values must be a non-empty list of positive integers")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        self.trials, self.workers, self.seed = int(self.trials), int(self.workers), int(self.seed)
        if self.sampler not in ("auto", "dense", "fast"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if self.experiment in WISHART_EXPERIMENTS:
            if self.m_rule is None:
                self.m_rule = {"kind": "ratio", "c": 1.0}
            self._check_m_rule()
        elif self.m_rule is not None:
            raise ConfigError(f"{self.experiment} has no m; remove the m_rule")
        if self.experiment == "clt-check" and self.scaling not in ("raw", "shifted", "normalised", "centered"):
            raise ConfigError(f"unknown scaling {self.scaling!r}")
        if self.experiment == "persistence" and self.driver not in ("gaussian", "exponential-difference"):
            raise ConfigError(f"unknown persistence driver {self.driver!r}")

    def _check_m_rule(self):
        rule = self.m_rule
        kind = rule.get("kind") if isinstance(rule, dict) else None
        if kind == "ratio":
            if not float(rule.get("c", 0)) >= 1.0:
                raise ConfigError("ratio m_rule needs c >= 1")
        elif kind == "offset":
            if not float(rule.get("C_gap", -1)) >= 0:
                raise ConfigError("offset m_rule needs C_gap >= 0")
        elif kind == "explicit":
            ms = rule.get("m")
            if not isinstance(ms, list) or len(ms) != len(self.n_values):
                raise ConfigError("explicit m_rule needs one m per n")
        else:
            raise ConfigError(f"inconsistent m_rule {rule!r}")
        for n, m in zip(self.n_values, self.m_values()):
            if m < 1:
                raise ConfigError(f"m rule gives m={m} for n={n}")
            if self.experiment == "concentration" and m < n:
                raise ConfigError("concentration needs m >= n")

    def m_values(self) -> list:
        rule = self.m_rule
        if rule is None:
            return [0] * len(self.n_values)
        if rule["kind"] == "ratio":
            return [int(round(float(rule["c"]) * n)) for n in self.n_values]
        if rule["kind"] == "offset":
            C = float(rule["C_gap"])
            return [n + int(math.ceil(C * math.sqrt(n * math.log(n)))) if n > 1 else n for n in self.n_values]
        return [int(v) for v in rule["m"]]

    def echo(self) -> dict:
        """Config fields that determine the results (worker count and paths excluded)."""
        d = asdict(self)
        for k in ("workers", "out", "per_trial_csv"):
            d.pop(k)
        return d


def _flat_overrides(flags: dict) -> dict:
    out = {}
    for key, value in flags.items():
        if value is None:
            continue
        if key == "c":
            out["m_rule"] = {"kind": "ratio", "c": float(value)}
        elif key == "gap_C":
            out["m_rule"] = {"kind": "offset", "C_gap": float(value)}
        elif key == "m":
            out["m_rule"] = {"kind": "explicit", "m": list(value)}
        elif key == "n":
            out["n_values"] = list(value)
        else:
            out[key] = value
    return out


def load_config(path: Optional[str] = None, **flags) -> ExperimentConfig:
    """Build a config from an optional JSON file, then flat flag overrides."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
    data.update(_flat_overrides(flags))
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "experiment" not in data:
        raise ConfigError("no experiment given")
    if "n_values" not in data:
        if data["experiment"] == "quadrature-report":
            data["n_values"] = [1]
        else:
            raise ConfigError("no n values given")
    try:
        return ExperimentConfig(**data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialRecord:
    experiment: str
    n: int
    m: int
    trial: int
    payload: dict


class TrialFailure(MajorlabError):
    def __init__(self, index: int, seed: int, cause: BaseException):
        super().__init__(f"trial {index} (substream seed={seed}, id={index}) failed: {cause!r}")
        self.index = index
        self.cause = cause


def _majorization_payload(x, y) -> dict:
    # x majorised by y  <=>  every tail sum of y is at most the matching tail of x
    sx, sy = suffix_sums(x), suffix_sums(y)
    out = {}
    for tol in MAJORIZATION_TOLS:
        out[f"dominated_tol{tol:g}"] = int(bool(np.all(sy[1:] <= sx[1:] + tol)))
    return out


def _wishart_pair(p, stream, sampler):
    a = wishart_spectrum(p, stream, sampler)
    b = wishart_spectrum(p, stream, sampler)
    return trace_normalise(a), trace_normalise(b)


def run_trial(cfg: ExperimentConfig, n_idx: int, t: int) -> TrialRecord:
    """One trial, a pure function of (config, n index, trial index)."""
    n = cfg.n_values[n_idx]
    m = cfg.m_values()[n_idx]
    g = n_idx * cfg.trials + t
    stream = derive_substream(cfg.seed, g)
    exp = cfg.experiment
    if exp in ("nielsen-decay", "pi-dist"):
        x, y = _wishart_pair(EnsembleParams(n, m), stream, cfg.sampler)
        payload = _majorization_payload(x, y)
        payload["pi"] = vidal_pi(x, y)
    elif exp == "uniform-decay":
        x = sorted_uniform_simplex_renyi(n, stream)
        y = sorted_uniform_simplex_renyi(n, stream)
        payload = _majorization_payload(x, y)
    elif exp == "clt-check":
        w = wishart_spectrum(EnsembleParams(n, m), stream, cfg.sampler)
        vals = linear_statistics(w.spectrum, cfg.degrees, cfg.scaling)
        payload = {f"stat_{d}": float(v) for d, v in zip(cfg.degrees, vals)}
    elif exp == "concentration":
        p = EnsembleParams(n, m)
        a = wishart_spectrum(p, stream, cfg.sampler).spectrum.values
        b = wishart_spectrum(p, stream, cfg.sampler).spectrum.values
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(a / b - 1.0)
        payload = {"gap": float(np.nanmax(r))}
    elif exp == "persistence":
        # one path per trial; every N cutoff is read off the same path
        payload = {"exit": persistence_exit(max(cfg.n_values), cfg.threshold, cfg.driver, stream)}
        n, m = max(cfg.n_values), 0
    else:
        raise ConfigError(f"{exp} has no per-trial records")
    return TrialRecord(exp, n, m, t, payload)


def _trial_units(cfg: ExperimentConfig):
    groups = 1 if cfg.experiment == "persistence" else len(cfg.n_values)
    return [(i, t) for i in range(groups) for t in range(cfg.trials)]


def _run_chunk(cfg_dict, units):
    cfg = ExperimentConfig(**cfg_dict)
    out = []
    for n_idx, t in units:
        try:
            out.append(run_trial(cfg, n_idx, t))
        except Exception as exc:  # re-raised by the coordinator with replay info
            return out, (n_idx * cfg.trials + t, exc)
    return out, None


def run_trials(cfg: ExperimentConfig) -> list:
    """All trial records in ascending global index, independent of worker count."""
    units = _trial_units(cfg)
    if cfg.workers == 1 or len(units) < 2:
        records, err = _run_chunk(asdict(cfg), units)
        chunks = [(records, err)]
    else:
        k = min(len(units), cfg.workers * 4)
        bounds = np.linspace(0, len(units), k + 1).astype(int)
        parts = [units[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_run_chunk, [asdict(cfg)] * len(parts), parts))
    records = []
    for recs, err in chunks:
        records.extend(recs)
        if err is not None:
            idx, exc = err
            if isinstance(exc, MajorlabError):
                exc.args = (f"{exc} [trial {idx}, substream seed={cfg.seed}, id={idx}]",)
                raise exc
            raise TrialFailure(idx, cfg.seed, exc)
    return records


# ---------------------------------------------------------------------------
# reduction


@dataclass
class SummaryRecord:
    experiment: str
    config: dict
    groups: list
    extra: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "config": self.config, "groups": self.groups, **self.extra}


def _proportion(flags) -> dict:
    flags = np.asarray(flags, dtype=np.float64)
    p = float(flags.mean())
    return {"count": int(flags.sum()), "probability": p, "stderr": math.sqrt(p * (1 - p) / flags.size)}


def _fit_dict(fit) -> dict:
    return {"theta": fit.theta, "stderr": fit.stderr, "r_squared": fit.r_squared,
            "log_prefactor": fit.log_prefactor, "excluded_n": list(fit.excluded)}


def _try_fit(ns, ps, ses):
    try:
        return _fit_dict(fit_power_law(ns, ps, ses))
    except MajorlabError as exc:
        return {"error": str(exc)}


def _by_group(cfg, records):
    out = {}
    for r in records:
        out.setdefault((r.n, r.m), []).append(r)
    return [((n, m), out[(n, m)]) for n, m in zip(cfg.n_values, cfg.m_values())]


def _reduce_majorization(cfg, records, extra):
    groups = []
    for (n, m), recs in _by_group(cfg, records):
        g = {"n": n, "m": m, "trials": len(recs)}
        for tol in MAJORIZATION_TOLS:
            key = f"dominated_tol{tol:g}"
            g[key] = _proportion([r.payload[key] for r in recs])
        if cfg.experiment != "uniform-decay":
            pi = np.array([r.payload["pi"] for r in recs])
            g["pi"] = {
                "mean": float(pi.mean()),
                "stderr": float(pi.std(ddof=1) / math.sqrt(pi.size)) if pi.size > 1 else None,
                "quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"), map(float, np.quantile(pi, [0.05, 0.25, 0.5, 0.75, 0.95])))),
                "below_0.9": _proportion(pi < 0.9),
                "histogram": np.histogram(pi, bins=20, range=(0.0, 1.0))[0].tolist(),
            }
        groups.append(g)
    if len(groups) >= 3:
        for tol in MAJORIZATION_TOLS:
            key = f"dominated_tol{tol:g}"
            extra[f"fit_{key}"] = _try_fit(
                [g["n"] for g in groups], [g[key]["probability"] for g in groups], [g[key]["stderr"] for g in groups]
            )
    return groups


def _reduce_clt(cfg, records, extra):
    groups = []
    for (n, m), recs in _by_group(cfg, records):
        keys = [f"stat_{d}" for d in cfg.degrees]
        data = np.array([[r.payload[k] for k in keys] for r in recs])
        ms = MomentSummary.from_array(data)
        g = {"n": n, "m": m, "trials": len(recs), "degrees": cfg.degrees,
             "mean": ms.mean.tolist(), "covariance": ms.covariance.tolist()}
        fs = [ll.Monomial(d) for d in cfg.degrees]
        if cfg.scaling == "raw" and m >= n:
            c = m / n
            g["target_covariance"] = {mode: ll.gram_matrix(fs, c, 256, mode).tolist() for mode in ll.BIG_GAMMA_PREFACTORS}
            g["target_mean_over_n"] = [ll.gamma_mp(f, c) for f in fs]
        elif cfg.scaling == "shifted":
            g["target_covariance"] = {mode: ll.gram_matrix(fs, None, 256, mode).tolist() for mode in ll.BIG_GAMMA_PREFACTORS}
            g["target_mean_over_n"] = {mode: [ll.gamma_semicircle(f, 256, mode) for f in fs] for mode in ll.GAMMA_PREFACTORS}
        if data.shape[0] >= 1000:
            diag = clt_diagnostic(data)
            g["skewness"] = diag.skewness.tolist()
            g["excess_kurtosis"] = diag.excess_kurtosis.tolist()
            g["ks_pvalue"] = diag.ks_pvalue.tolist()
            g["degenerate"] = diag.degenerate.tolist()
        groups.append(g)
    return groups


def _reduce_persistence(cfg, records, extra):
    res = survival_from_exits([r.payload["exit"] for r in records], cfg.n_values, cfg.threshold)
    groups = [{"N": N, "trials": res.trials, "survivors": int(s), "probability": float(p), "stderr": float(se)}
              for N, s, p, se in zip(res.N_values, res.survivors, res.probabilities, res.stderrs)]
    if len(groups) >= 3:
        extra["fit"] = _try_fit(res.N_values, res.probabilities, res.stderrs)
    return groups


def _reduce_concentration(cfg, records, extra):
    groups = []
    for (n, m), recs in _by_group(cfg, records):
        gaps = np.array([r.payload["gap"] for r in recs])
        groups.append({"n": n, "m": m, "trials": len(recs), "eps": cfg.eps,
                       "within_eps": _proportion(gaps <= cfg.eps), "median_gap": float(np.median(gaps))})
    return groups


def quadrature_report(cfg: ExperimentConfig) -> dict:
    """Limit-law integrals in every prefactor convention."""
    report = {"kernel_mass": {str(N): ll.kernel_mass(N) for N in (16, 64)}}
    report["gamma_semicircle"] = {
        mode: {str(k): ll.gamma_semicircle(ll.Monomial(k), 256, mode) for k in range(0, 7)} for mode in ll.GAMMA_PREFACTORS
    }
    report["gamma_mp"] = {str(c): {str(k): ll.gamma_mp(ll.Monomial(k), c) for k in range(0, 4)} for c in cfg.c_list}
    report["big_gamma_c_xx"] = {
        mode: {str(c): ll.big_gamma_c(ll.Monomial(1), ll.Monomial(1), c, 256, mode) for c in cfg.c_list}
        for mode in ll.BIG_GAMMA_PREFACTORS
    }
    report["C_c"] = {str(c): ll.c_limit_constant(c) for c in cfg.c_list}
    lc = ll.estimate_limit_constants(cfg.k_list, cfg.c_list)
    report["I_of_A"] = {f"{A:g}": v for A, v in lc.I_of_A.items()}
    for mode, pref in ll.BIG_GAMMA_PREFACTORS.items():
        s = pref * math.pi**2
        report[f"alpha[{mode}]"] = lc.alpha * s
        report[f"alpha_c[{mode}]"] = {f"{c:g}": v * s for c, v in lc.alpha_c.items()}
    report["alpha_sequence[as-written]"] = {str(k): v for k, v in lc.diagnostics["alpha_sequence"].items()}
    report["alpha_converged"] = lc.diagnostics["alpha_converged"]
    report["alpha_target[as-written]"] = lc.diagnostics["alpha_target"]
    report["alpha_c_target[as-written]"] = lc.diagnostics["alpha_c_target"]
    return report


def validate_sampler(n: int, m: int, trials: int, seed: int) -> dict:
    """Per-index two-sample KS p-values between the dense and fast samplers."""
    p = EnsembleParams(n, m)
    dense = np.array([wishart_spectrum_dense(p, derive_substream(seed, 2 * i)).spectrum.values for i in range(trials)])
    fast = np.array([wishart_spectrum_fast(p, derive_substream(seed, 2 * i + 1)).spectrum.values for i in range(trials)])
    pv = [float(sps.ks_2samp(dense[:, k], fast[:, k]).pvalue) for k in range(n)]
    return {"n": n, "m": m, "trials": trials, "ks_pvalues": pv, "min_pvalue": min(pv)}


def run_experiment(cfg: ExperimentConfig) -> SummaryRecord:
    extra = {}
    if cfg.experiment == "quadrature-report":
        return SummaryRecord(cfg.experiment, cfg.echo(), [], {"quadrature": quadrature_report(cfg)})
    records = run_trials(cfg)
    if cfg.experiment in ("nielsen-decay", "uniform-decay", "pi-dist"):
        groups = _reduce_majorization(cfg, records, extra)
    elif cfg.experiment == "clt-check":
        groups = _reduce_clt(cfg, records, extra)
    elif cfg.experiment == "persistence":
        groups = _reduce_persistence(cfg, records, extra)
    else:
        groups = _reduce_concentration(cfg, records, extra)
    if cfg.validate_sampler and cfg.experiment in WISHART_EXPERIMENTS:
        extra["sampler_validation"] = [
            validate_sampler(n, m, cfg.trials, cfg.seed ^ 0x5A5A) for n, m in zip(cfg.n_values, cfg.m_values()) if m >= n
        ]
    return SummaryRecord(cfg.experiment, cfg.echo(), groups, extra, records)
