"""Quadrature for the Marchenko-Pastur and semicircle limit laws and their covariance kernels.

Every integral here has an endpoint singularity of inverse-square-root or
square-root type; each axis uses the Gauss family whose weight absorbs it:

* first-kind Chebyshev for the 1/sqrt(1 - x^2) covariance kernel,
* second-kind Chebyshev for the semicircle weight sqrt(1 - x^2),
* Gauss-Jacobi(1/2, -1/2) for the Marchenko-Pastur density at c = 1.

Two prefactor conventions are carried side by side. ``as-written`` uses 1/pi
for the semicircle functional and 1/pi^2 for the covariance kernel;
``density`` / ``clt-calibrated`` use 2/pi and 1/(4 pi^2). The calibrated kernel
reproduces Var(tr M / n) = m / n exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy import special

from .errors import AccuracyError, ValidationError

GAMMA_PREFACTORS = {"as-written": 1.0 / math.pi, "density": 2.0 / math.pi}
BIG_GAMMA_PREFACTORS = {"as-written": 1.0 / math.pi**2, "clt-calibrated": 1.0 / (4.0 * math.pi**2)}

# above this degree monomial divided differences switch from the power sum to expm1/log1p
_POWER_SUM_MAX = 64


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class MPParams:
    c: float
    a_minus: float
    a_plus: float
    beta: float

    @classmethod
    def from_c(cls, c: float) -> "MPParams":
        if not c >= 1.0:
            raise ValidationError(f"aspect ratio c must be >= 1, got {c}")
        r = math.sqrt(c)
        a_plus = (1.0 + r) ** 2
        return cls(c=float(c), a_minus=(1.0 - r) ** 2, a_plus=a_plus, beta=2.0 * r / a_plus)

    def phi(self, x):
        """Affine map [-1, 1] -> [a_-, a_+]."""
        return 2.0 * math.sqrt(self.c) * x + self.c + 1.0


# ---------------------------------------------------------------------------
# test functions


class TestFunction:
    """A scalar function with a vectorised divided difference."""

    degree: Optional[int] = None  # polynomial degree when known, for exact quadrature sizing

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def dd(self, x, y):
        raise NotImplementedError

    def __add__(self, other):
        return LinearCombination([(1.0, self), (1.0, other)])

    def __rmul__(self, a):
        return LinearCombination([(float(a), self)])


def _monomial_dd(x, y, k):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if k == 0:
        return np.zeros(np.broadcast(x, y).shape)
    if k == 1:
        return np.ones(np.broadcast(x, y).shape)
    if k <= _POWER_SUM_MAX:
        # sum_j x^j y^(k-1-j) by Horner in x
        acc = np.ones(np.broadcast(x, y).shape)
        ypow = np.ones_like(acc)
        for _ in range(k - 1):
            ypow = ypow * y
            acc = acc * x + ypow
        return acc
    x, y = np.broadcast_arrays(x, y)
    big = np.where(np.abs(x) >= np.abs(y), x, y)
    small = np.where(np.abs(x) >= np.abs(y), y, x)
    out = np.empty(x.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        same = (big * small > 0) & (big != small)
        # x^k - y^k = big^k (1 - r^k) with r = small/big in (0, 1]
        u = (big - small) / big
        stable = big ** (k - 1) * (-np.expm1(k * np.log1p(-u))) / u
        direct = (big**k - small**k) / (big - small)
        out = np.where(same, stable, direct)
        out = np.where(big == small, k * big ** (k - 1), out)
    return out


class Monomial(TestFunction):
    def __init__(self, k: int):
        if k < 0:
            raise ValidationError("monomial degree must be >= 0")
        self.k = int(k)
        self.degree = self.k

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64) ** self.k

    def derivative(self, x):
        if self.k == 0:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        return self.k * np.asarray(x, dtype=np.float64) ** (self.k - 1)

    def dd(self, x, y):
        return _monomial_dd(x, y, self.k)

    def __repr__(self):
        return f"x^{self.k}"


class ScaledMonomial(TestFunction):
    """h_k(x) = (x / a_+)^k."""

    def __init__(self, k: int, a_plus: float):
        self.k = int(k)
        self.a_plus = float(a_plus)
        self.degree = self.k

    def __call__(self, x):
        return (np.asarray(x, dtype=np.float64) / self.a_plus) ** self.k

    def derivative(self, x):
        return self.k / self.a_plus * (np.asarray(x, dtype=np.float64) / self.a_plus) ** (self.k - 1)

    def dd(self, x, y):
        a = self.a_plus
        return _monomial_dd(np.asarray(x) / a, np.asarray(y) / a, self.k) / a

    def __repr__(self):
        return f"(x/{self.a_plus:g})^{self.k}"


class Generic(TestFunction):
    """Arbitrary callable; the confluent limit uses the derivative at the midpoint."""

    def __init__(self, func: Callable, deriv: Optional[Callable] = None, name: str = "f"):
        self.func = func
        self.deriv = deriv
        self.name = name

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=np.float64))

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.deriv is not None:
            return self.deriv(x)
        h = 1e-5 * (1.0 + np.abs(x))
        return (self.func(x + h) - self.func(x - h)) / (2.0 * h)

    def dd(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
        close = np.abs(x - y) < 1e-7 * (1.0 + np.abs(x) + np.abs(y))
        with np.errstate(divide="ignore", invalid="ignore"):
            q = (self.func(x) - self.func(y)) / (x - y)
        return np.where(close, self.derivative(0.5 * (x + y)), q)

    def __repr__(self):
        return self.name


class Composed(TestFunction):
    """f(scale * x + shift); divided differences pick up the constant ``scale``."""

    def __init__(self, f: TestFunction, scale: float, shift: float):
        self.f = f
        self.scale = float(scale)
        self.shift = float(shift)
        self.degree = f.degree

    def _map(self, x):
        return self.scale * np.asarray(x, dtype=np.float64) + self.shift

    def __call__(self, x):
        return self.f(self._map(x))

    def derivative(self, x):
        return self.scale * self.f.derivative(self._map(x))

    def dd(self, x, y):
        return self.scale * self.f.dd(self._map(x), self._map(y))

    def __repr__(self):
        return f"{self.f!r}o({self.scale:g}x+{self.shift:g})"


class LinearCombination(TestFunction):
    def __init__(self, terms):
        self.terms = [(float(a), f) for a, f in terms]
        degs = [f.degree for _, f in self.terms]
        self.degree = None if any(d is None for d in degs) else max(degs)

    def __call__(self, x):
        return sum(a * f(x) for a, f in self.terms)

    def derivative(self, x):
        return sum(a * f.derivative(x) for a, f in self.terms)

    def dd(self, x, y):
        return sum(a * f.dd(x, y) for a, f in self.terms)


def as_test_function(f) -> TestFunction:
    if isinstance(f, TestFunction):
        return f
    if isinstance(f, int):
        return Monomial(f)
    if callable(f):
        return Generic(f)
    raise ValidationError(f"cannot interpret {f!r} as a test function")


def divided_difference(f, x, y):
    """(f(x) - f(y)) / (x - y), with the derivative as the confluent value."""
    out = as_test_function(f).dd(x, y)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# quadrature grids


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    family: str

    def __len__(self):
        return len(self.nodes)


@lru_cache(maxsize=64)
def quadrature_grid(family: str, n: int) -> QuadratureGrid:
    if n < 1:
        raise ValidationError("quadrature size must be >= 1")
    if family == "chebyshev-1":
        i = np.arange(1, n + 1)
        nodes = np.cos((2 * i - 1) * np.pi / (2 * n))
        weights = np.full(n, np.pi / n)
    elif family == "chebyshev-2":
        nodes, weights = special.roots_chebyu(n)
    elif family == "jacobi(0.5,-0.5)":
        nodes, weights = special.roots_jacobi(n, 0.5, -0.5)
    elif family == "legendre-01":
        x, w = legendre.leggauss(n)
        nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    else:
        raise ValidationError(f"unknown quadrature family {family!r}")
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(nodes, weights, family)


# ---------------------------------------------------------------------------
# one-dimensional functionals


def kernel_mass(n_nodes: int = 64, component: str = "full") -> float:
    """(1/pi^2) * integral of (1 - xy)/sqrt((1-x^2)(1-y^2)) over [-1, 1]^2.

    ``component`` selects ``full``, ``one`` (the constant part) or ``xy`` (the
    -xy part alone).
    """
    if n_nodes < 4:
        raise ValidationError("kernel_mass needs at least 4 nodes per axis")
    g = quadrature_grid("chebyshev-1", n_nodes)
    w, x = g.weights, g.nodes
    one = w.sum() ** 2
    xy = -np.dot(w, x) ** 2
    total = {"full": one + xy, "one": one, "xy": xy}[component]
    return float(total / math.pi**2)


def gamma_semicircle(f, n_nodes: int = 256, prefactor_mode: str = "density") -> float:
    """Semicircle functional: prefactor * integral of f(x) sqrt(1 - x^2) over [-1, 1]."""
    f = as_test_function(f)
    g = quadrature_grid("chebyshev-2", n_nodes)
    return float(GAMMA_PREFACTORS[prefactor_mode] * np.dot(g.weights, f(g.nodes)))


def gamma_mp(f, c: float, n_nodes: int = 256) -> float:
    """Marchenko-Pastur functional (1/2pi) int f(x) sqrt((a+ - x)(x - a-)) / x dx.

    After x = phi(t) the integral is (2c/pi) int f(phi)/phi sqrt(1 - t^2) dt. At
    c = 1, phi(t) = 2(1 + t) cancels one half-power and the weight becomes
    (1 - t)^(1/2) (1 + t)^(-1/2).
    """
    f = as_test_function(f)
    p = MPParams.from_c(c)
    if p.c == 1.0:
        g = quadrature_grid("jacobi(0.5,-0.5)", n_nodes)
        return float(np.dot(g.weights, f(p.phi(g.nodes))) / math.pi)
    g = quadrature_grid("chebyshev-2", n_nodes)
    x = p.phi(g.nodes)
    return float(2.0 * p.c / math.pi * np.dot(g.weights, f(x) / x))


# ---------------------------------------------------------------------------
# covariance kernel


def exact_nodes(f: TestFunction, g: TestFunction, minimum: int = 256, cap: int = 8192) -> int:
    """Chebyshev-Gauss size for the pair (f, g).

    Polynomials of total degree d are integrated exactly with d // 2 + 1 nodes.
    For high degree, x^k in the angle variable is a bump of width ~ 1/sqrt(k)
    near the endpoints, so 20 sqrt(k) nodes already resolve it to roundoff and
    the smaller of the two sizes is used.
    """
    if f.degree is None or g.degree is None:
        return minimum
    exact = (f.degree + g.degree) // 2 + 1
    resolved = 20 * math.ceil(math.sqrt(max(f.degree, g.degree)))
    return int(min(cap, max(minimum, min(exact, resolved))))


def big_gamma(f, g, n_nodes: Optional[int] = 256, prefactor_mode: str = "as-written", block: int = 256) -> float:
    """Covariance kernel functional of f and g on [-1, 1]^2.

    Tensor first-kind Chebyshev quadrature of dd_f * dd_g * (1 - xy) against the
    product arcsine weight. ``n_nodes=None`` sizes the grid for exactness on
    polynomials.
    """
    f, g = as_test_function(f), as_test_function(g)
    if n_nodes is None:
        n_nodes = exact_nodes(f, g)
    grid = quadrature_grid("chebyshev-1", n_nodes)
    x, w = grid.nodes, grid.weights
    total = 0.0
    for start in range(0, n_nodes, block):
        xs = x[start : start + block, None]
        ws = w[start : start + block]
        vals = f.dd(xs, x[None, :]) * g.dd(xs, x[None, :]) * (1.0 - xs * x[None, :])
        total += float(ws @ (vals @ w))
    return BIG_GAMMA_PREFACTORS[prefactor_mode] * total


def compose_mp(f, c: float) -> Composed:
    p = MPParams.from_c(c)
    return Composed(as_test_function(f), 2.0 * math.sqrt(p.c), p.c + 1.0)


def big_gamma_c(f, g, c: float, n_nodes: Optional[int] = 256, prefactor_mode: str = "as-written") -> float:
    """Covariance kernel after composing both functions with phi_c."""
    return big_gamma(compose_mp(f, c), compose_mp(g, c), n_nodes, prefactor_mode)


def gram_matrix(functions, c: Optional[float] = None, n_nodes: Optional[int] = 256, prefactor_mode: str = "as-written"):
    """Matrix of pairwise kernel values; ``c=None`` means the uncomposed kernel."""
    fs = [as_test_function(f) for f in functions]
    if c is not None:
        fs = [compose_mp(f, c) for f in fs]
    k = len(fs)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = big_gamma(fs[i], fs[j], n_nodes, prefactor_mode)
    return out


# ---------------------------------------------------------------------------
# limits


def c_limit_constant(c: float) -> float:
    """lim k^{3/2} gamma_c(h_k) = (2c / (pi a_+)) * sqrt(pi) / (sqrt(2) beta^{3/2})."""
    p = MPParams.from_c(c)
    return 2.0 * p.c / (math.pi * p.a_plus) * math.sqrt(math.pi) / (math.sqrt(2.0) * p.beta**1.5)


def _exp_dd(s, t, a=1.0):
    """Divided difference of exp(-a x) at (s, t), stable on and near the diagonal."""
    h = a * np.abs(t - s)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(h < 1e-8, 1.0 - 0.5 * h, -np.expm1(-h) / np.where(h == 0, 1.0, h))
    return -a * np.exp(-a * np.minimum(s, t)) * phi


def _exp_kernel_at(A: float, n_nodes: int, scale: float) -> float:
    # s = u^2, t = v^2 turns (s + t)/sqrt(st) ds dt into 4 (u^2 + v^2) du dv;
    # u = scale * x / (1 - x) makes the algebraic 1/v^2 tail along each axis smooth in x.
    g = quadrature_grid("legendre-01", n_nodes)
    x, w = g.nodes, g.weights
    u = scale * x / (1.0 - x)
    du = w * scale / (1.0 - x) ** 2
    s = (u * u)[:, None]
    t = (u * u)[None, :]
    vals = 4.0 * (s + t) * _exp_dd(s, t) * _exp_dd(s, t, A)
    return float(du @ vals @ du)


def exp_kernel_integral(A: float, n_nodes: int = 512, scale: float = 1.0, rtol: float = 1e-4) -> float:
    """I(A) = int_0^inf int_0^inf dd(e^-s) dd(e^-As) (s + t)/sqrt(st) ds dt.

    Evaluated at ``n_nodes`` and ``n_nodes // 2`` per axis; disagreement above
    ``rtol`` raises :class:`AccuracyError`.
    """
    if A < 1:
        raise ValidationError(f"A must be >= 1, got {A}")
    fine = _exp_kernel_at(A, n_nodes, scale)
    coarse = _exp_kernel_at(A, max(n_nodes // 2, 2), scale)
    if abs(fine - coarse) > rtol * abs(fine):
        raise AccuracyError(f"I({A}) unresolved: {coarse!r} at N/2 vs {fine!r} at N")
    return fine


@dataclass
class LimitConstants:
    C_c: dict
    alpha: float
    alpha_c: dict
    I_of_A: dict
    diagnostics: dict = field(default_factory=dict)


def diag_limit_sequence(k_list, c: Optional[float] = None, n_nodes: Optional[int] = None):
    """Gamma(x^k, x^k) (c=None) or Gamma_c(h_k, h_k) for each k, as-written prefactor."""
    out = []
    for k in k_list:
        if c is None:
            f = Monomial(k)
            out.append(big_gamma(f, f, n_nodes))
        else:
            h = ScaledMonomial(k, MPParams.from_c(c).a_plus)
            out.append(big_gamma_c(h, h, c, n_nodes))
    return out


def offdiag_sequence(k: int, A_list, n_nodes: Optional[int] = None):
    """Gamma(x^k, x^{A k}) for each A."""
    return [big_gamma(Monomial(k), Monomial(int(A * k)), n_nodes) for A in A_list]


def estimate_limit_constants(k_list, c_list, n_nodes: Optional[int] = None, A_list=(1, 2, 4, 8, 16, 32, 64)) -> LimitConstants:
    """Largest-k estimates of alpha and alpha_c, cross-checked against I(1)."""
    k_list = list(k_list)
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ValidationError("k_list must be strictly increasing")
    I_of_A = {float(A): exp_kernel_integral(A) for A in A_list}
    I1 = I_of_A.get(1.0, exp_kernel_integral(1.0))

    def _cauchy(seq):
        rel = [abs(b - a) / abs(b) for a, b in zip(seq, seq[1:])]
        return rel, all(r <= 0.05 for r in rel)

    seq = diag_limit_sequence(k_list, None, n_nodes)
    rel, ok = _cauchy(seq)
    diagnostics = {
        "alpha_sequence": dict(zip(k_list, seq)),
        "alpha_successive_rel": rel,
        "alpha_converged": ok,
        "alpha_target": I1 / math.pi**2,
        "alpha_c_target": I1 / (2 * math.pi**2),
    }
    alpha_c = {}
    for c in c_list:
        seq_c = diag_limit_sequence(k_list, c, n_nodes)
        rel_c, ok_c = _cauchy(seq_c)
        alpha_c[float(c)] = seq_c[-1]
        diagnostics[f"alpha_c_sequence[{c}]"] = dict(zip(k_list, seq_c))
        diagnostics[f"alpha_c_converged[{c}]"] = ok_c
    return LimitConstants(
        C_c={float(c): c_limit_constant(c) for c in c_list},
        alpha=seq[-1],
        alpha_c=alpha_c,
        I_of_A=I_of_A,
        diagnostics=diagnostics,
    )
