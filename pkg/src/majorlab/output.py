"""Summary JSON, per-trial CSV and plot CSV emission."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from datetime import datetime, timezone

import numpy as np

from .errors import ValidationError

PACKAGE_VERSION = "0.1.0"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def run_id(config_echo: dict) -> str:
    blob = json.dumps(_clean(config_echo), sort_keys=True).encode()
    return hashlib.sha1(blob + PACKAGE_VERSION.encode()).hexdigest()[:12]


def summary_json(summary, timestamp: str | None = None) -> str:
    """Deterministic JSON text; the timestamp is the only line that varies between runs."""
    body = _clean(summary.to_dict())
    body["run_id"] = run_id(summary.config)
    text = json.dumps(body, sort_keys=True, indent=2)
    ts = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    # first line after the opening brace, so stripping it leaves valid JSON
    return "{\n" + f'  "timestamp": {json.dumps(ts)},\n' + text[2:] + "\n"


def strip_timestamp(text: str) -> str:
    return "".join(line for line in text.splitlines(keepends=True) if not line.lstrip().startswith('"timestamp"'))


def trial_csv(records) -> str:
    if not records:
        raise ValidationError("refusing to write an empty trial set")
    keys = list(records[0].payload)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "n", "m", "trial", *keys])
    for r in records:
        w.writerow([r.experiment, r.n, r.m, r.trial, *(repr(float(r.payload[k])) if isinstance(r.payload[k], float) else r.payload[k] for k in keys)])
    return buf.getvalue()


def read_trial_csv(path_or_text: str) -> list:
    text = path_or_text
    if os.path.exists(path_or_text):
        with open(path_or_text) as fh:
            text = fh.read()
    return list(csv.DictReader(io.StringIO(text)))


def plot_csv(summary) -> str | None:
    """n, probability, stderr, fitted curve value; None when the experiment has no such series."""
    exp = summary.experiment
    rows = []
    fit = None
    if exp in ("nielsen-decay", "uniform-decay", "pi-dist"):
        rows = [(g["n"], g["dominated_tol0"]["probability"], g["dominated_tol0"]["stderr"]) for g in summary.groups]
        fit = summary.extra.get("fit_dominated_tol0")
    elif exp == "persistence":
        rows = [(g["N"], g["probability"], g["stderr"]) for g in summary.groups]
        fit = summary.extra.get("fit")
    elif exp == "concentration":
        rows = [(g["n"], g["within_eps"]["probability"], g["within_eps"]["stderr"]) for g in summary.groups]
    if not rows:
        return None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "probability", "stderr", "fitted"])
    for n, p, se in rows:
        fitted = ""
        if fit and "theta" in fit:
            fitted = repr(math.exp(fit["log_prefactor"]) * n ** (-fit["theta"]))
        w.writerow([n, repr(float(p)), repr(float(se)), fitted])
    return buf.getvalue()


def emit_outputs(summary, out_dir: str | None, per_trial: bool = True, timestamp: str | None = None) -> dict:
    """Write summary.json, trials.csv and plot.csv under ``out_dir``.

    Returns {name: path}. Raises ``OSError`` if the directory is unwritable;
    the caller still holds the summary and can print it.
    """
    if summary.experiment != "quadrature-report" and not summary.records:
        raise ValidationError("refusing to emit a summary with no trials")
    text = summary_json(summary, timestamp)
    if out_dir is None:
        return {"summary.json": text}
    os.makedirs(out_dir, exist_ok=True)
    files = {"summary.json": text}
    if per_trial and summary.records:
        files["trials.csv"] = trial_csv(summary.records)
    plot = plot_csv(summary)
    if plot is not None:
        files["plot.csv"] = plot
    paths = {}
    for name, content in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(content)
        paths[name] = path
    return paths
