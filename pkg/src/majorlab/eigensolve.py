"""Eigenvalues of Hermitian matrices and singular values of complex matrices.

Householder reduction to real symmetric tridiagonal form followed by implicit
QL sweeps with a Wilkinson shift. Eigenvectors are never formed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, ValidationError

EPS = np.finfo(np.float64).eps
# relative threshold (times ||H||_F) below which negative PSD eigenvalues are clamped
TOL_EIG = 1e-10


@dataclass(frozen=True)
class SymTridiagonal:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        if len(self.offdiag) != max(len(self.diag) - 1, 0):
            raise ValidationError(
                f"offdiag length {len(self.offdiag)} inconsistent with diag length {len(self.diag)}"
            )


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted descending, with the shape they came from.

    ``m`` is the ambient rectangular width (0 when not applicable).
    """

    values: np.ndarray
    n: int
    m: int = 0

    def __len__(self):
        return len(self.values)


@njit(cache=True)
def _tridiagonalize(a):
    n = a.shape[0]
    d = np.empty(n)
    e = np.zeros(max(n - 1, 0))
    v = np.empty(n, dtype=np.complex128)
    p = np.empty(n, dtype=np.complex128)
    for k in range(n - 2):
        size = n - k - 1
        xnorm2 = 0.0
        for i in range(size):
            z = a[k + 1 + i, k]
            xnorm2 += z.real * z.real + z.imag * z.imag
        xnorm = np.sqrt(xnorm2)
        if xnorm == 0.0:
            e[k] = 0.0
            continue
        x0 = a[k + 1, k]
        ax0 = abs(x0)
        phase = x0 / ax0 if ax0 > 0.0 else 1.0 + 0.0j
        # reflect onto -phase*||x|| so the pivot never cancels
        alpha = -phase * xnorm
        for i in range(size):
            v[i] = a[k + 1 + i, k]
        v[0] -= alpha
        vnorm2 = 0.0
        for i in range(size):
            vnorm2 += v[i].real * v[i].real + v[i].imag * v[i].imag
        vnorm = np.sqrt(vnorm2)
        for i in range(size):
            v[i] /= vnorm
        # p = A22 v
        for i in range(size):
            acc = 0.0 + 0.0j
            for j in range(size):
                acc += a[k + 1 + i, k + 1 + j] * v[j]
            p[i] = acc
        kk = 0.0
        for i in range(size):
            kk += (v[i].conjugate() * p[i]).real
        for i in range(size):
            p[i] -= kk * v[i]
        for i in range(size):
            vi = v[i]
            pi = p[i]
            for j in range(size):
                a[k + 1 + i, k + 1 + j] -= 2.0 * (vi * p[j].conjugate() + pi * v[j].conjugate())
        e[k] = xnorm
        a[k + 1, k] = alpha
    for i in range(n):
        d[i] = a[i, i].real
    if n >= 2:
        e[n - 2] = abs(a[n - 1, n - 2])
    return d, e


@njit(cache=True)
def _tql_implicit(d, e_in):
    """In-place implicit QL on (d, e). Returns -1 on success, else the stuck index."""
    n = d.shape[0]
    e = np.zeros(n)
    for i in range(n - 1):
        e[i] = e_in[i]
    eps = 2.220446049250313e-16
    total = 0
    limit = 30 * n
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                if abs(e[m]) <= eps * (abs(d[m]) + abs(d[m + 1])):
                    break
                m += 1
            if m == l:
                break
            total += 1
            if total > limit:
                return l
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.sqrt(g * g + 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.sqrt(f * f + g * g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} has non-finite entries")


def householder_tridiagonalize(h) -> SymTridiagonal:
    """Unitarily reduce a Hermitian matrix to real symmetric tridiagonal form."""
    a = np.array(h, dtype=np.complex128, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    _check_finite(a, "matrix")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.conj().T) > 1e-12 * max(scale, 1.0):
        raise ValidationError("matrix is not conjugate-symmetric")
    d, e = _tridiagonalize(a)
    return SymTridiagonal(d, e)


def tridiagonal_eigenvalues(t: SymTridiagonal, tol: float | None = None) -> np.ndarray:
    """All eigenvalues of a symmetric tridiagonal matrix, sorted descending.

    ``tol`` is accepted for interface symmetry; the deflation rule
    |e_i| <= eps*(|d_i| + |d_{i+1}|) already gives eigenvalues to within a
    small multiple of eps times the spectral scale.
    """
    d = np.array(t.diag, dtype=np.float64, copy=True)
    e = np.asarray(t.offdiag, dtype=np.float64)
    _check_finite(d, "diag")
    _check_finite(e, "offdiag")
    if d.size == 0:
        return d
    stuck = _tql_implicit(d, e)
    if stuck >= 0:
        raise ConvergenceError(f"QL iteration failed to deflate eigenvalue {stuck}", index=int(stuck))
    return np.sort(d)[::-1].copy()


def hermitian_eigenvalues(h, psd: bool = False, m: int = 0) -> Spectrum:
    """Eigenvalues of a Hermitian matrix, sorted descending.

    With ``psd=True`` (matrices of the form G G^dagger) tiny negative values
    produced by roundoff are clamped to zero; anything more negative than
    ``TOL_EIG * ||H||_F`` is treated as a solver failure.
    """
    h = np.asarray(h)
    t = householder_tridiagonalize(h)
    vals = tridiagonal_eigenvalues(t)
    if psd:
        vals = _clamp_psd(vals, float(np.linalg.norm(h)))
    return Spectrum(vals, n=h.shape[0], m=m)


def _clamp_psd(vals, fro):
    tol = TOL_EIG * fro
    if vals.size and vals[-1] < -tol:
        raise ConvergenceError(
            f"eigenvalue {vals[-1]:.3e} of a PSD matrix is below -{tol:.3e}", index=vals.size - 1
        )
    return np.where(vals < 0.0, 0.0, vals)


def gaussian_singular_values(g) -> np.ndarray:
    """Singular values of a complex rectangular matrix, sorted descending.

    Works on the smaller Gram matrix, so the result has min(n, m) entries.
    """
    g = np.asarray(g, dtype=np.complex128)
    if g.ndim != 2:
        raise ValidationError(f"expected a matrix, got shape {g.shape}")
    _check_finite(g, "matrix")
    if g.shape[0] > g.shape[1]:
        g = g.conj().T
    gram = g @ g.conj().T
    # symmetrize away the last-bit asymmetry of the product
    gram = 0.5 * (gram + gram.conj().T)
    vals = hermitian_eigenvalues(gram, psd=True).values
    return np.sqrt(vals)
