"""Suffix-sum majorisation tests and the Vidal conversion probability."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class MajorizationReport:
    """Outcome of comparing tail sums of x against those of y.

    ``first_violation_k`` is 1-based, matching "for all k <= n".
    """

    dominated: bool
    first_violation_k: Optional[int]
    suffix_x: np.ndarray
    suffix_y: np.ndarray
    pi: float


def _values(x):
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def suffix_sums(x) -> np.ndarray:
    """out[k] = x_k + ... + x_n for a non-increasing x, summed smallest-first."""
    x = _values(x)
    if x.ndim != 1:
        raise ValidationError("suffix_sums expects a 1-d vector")
    if np.any(np.diff(x) > 0):
        raise ValidationError("suffix_sums expects a non-increasing vector")
    return np.cumsum(x[::-1])[::-1]


def _pi_from_suffixes(sx, sy):
    # k = 1 compares the totals, which are equal by construction
    a, b = sx[1:], sy[1:]
    both_zero = (a == 0) & (b == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(b > 0, a / np.where(b > 0, b, 1.0), np.inf)
    ratio = ratio[~both_zero]
    if ratio.size == 0:
        return 1.0
    return float(min(1.0, ratio.min()))


def _check_pair(x, y):
    if x.shape != y.shape:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}")


def tails_dominated(x, y, tol: float = 0.0, equal_totals: bool = True) -> MajorizationReport:
    """Check suffix_x[k] <= suffix_y[k] + tol for every k.

    With ``equal_totals`` (the simplex case) the k = 1 comparison is the
    equality of totals and is not re-tested in floating point, where the two
    sums can differ in the last bit.
    """
    xv, yv = _values(x), _values(y)
    _check_pair(xv, yv)
    sx, sy = suffix_sums(xv), suffix_sums(yv)
    start = 1 if equal_totals else 0
    bad = np.flatnonzero(sx[start:] > sy[start:] + tol)
    first = int(bad[0]) + start + 1 if bad.size else None
    return MajorizationReport(first is None, first, sx, sy, _pi_from_suffixes(sx, sy))


def vidal_pi(x, y) -> float:
    """min_k suffix_x[k] / suffix_y[k] for two normalised spectra.

    Terms with both tails zero are skipped; a zero y-tail against a positive
    x-tail counts as +inf.
    """
    xv, yv = _values(x), _values(y)
    _check_pair(xv, yv)
    for name, v in (("x", xv), ("y", yv)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValidationError(f"{name} is not normalised (sum {v.sum():.12g})")
    return _pi_from_suffixes(suffix_sums(xv), suffix_sums(yv))


def convex_dominance_check(x, y, f: Callable[[np.ndarray], np.ndarray]) -> bool:
    """Whether sum f(x) <= sum f(y) + 1e-9.

    Intended for pairs where x is majorised by y (every tail of y is at most
    the matching tail of x, equal totals); then it holds for every convex f.
    """
    xv, yv = _values(x), _values(y)
    _check_pair(xv, yv)
    return bool(np.sum(f(xv)) <= np.sum(f(yv)) + 1e-9)
