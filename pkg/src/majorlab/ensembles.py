"""Random streams and samplers for Wishart-Laguerre spectra and simplex vectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigensolve import Spectrum, SymTridiagonal, _clamp_psd, hermitian_eigenvalues, tridiagonal_eigenvalues
from .errors import DegenerateInputError, ValidationError

_U64 = (1 << 64) - 1


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id)``.

    Backed by a Philox 4x64 bit generator whose 128-bit key is the pair of
    ids, so the output is a pure function of the key and the counter. A stream
    is single-owner; build one per trial and never share it across workers.
    """

    master_seed: int
    stream_id: int
    counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        key = np.array([self.master_seed & _U64, self.stream_id & _U64], dtype=np.uint64)
        ctr = np.array(
            [(self.counter >> (64 * i)) & _U64 for i in range(4)], dtype=np.uint64
        )
        self._gen = np.random.Generator(np.random.Philox(key=key, counter=ctr))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def position(self) -> int:
        """Current 256-bit Philox counter as an integer.

        Each counter value yields four 64-bit words, so resuming from it
        reproduces the stream exactly only at a block boundary.
        """
        ctr = self._gen.bit_generator.state["state"]["counter"]
        return sum(int(c) << (64 * i) for i, c in enumerate(ctr))

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def exponential(self, size=None):
        return self._gen.standard_exponential(size)

    def gamma(self, shape, size=None):
        return self._gen.standard_gamma(shape, size)

    def uniform(self, size=None):
        return self._gen.random(size)


def derive_substream(master_seed: int, index: int) -> RngStream:
    return RngStream(int(master_seed), int(index))


@dataclass(frozen=True)
class EnsembleParams:
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) < 1 or int(self.m) < 1:
            raise ValidationError(f"ensemble parameters must be >= 1, got n={self.n}, m={self.m}")


@dataclass(frozen=True)
class WishartSample:
    spectrum: Spectrum
    trace: float


@dataclass(frozen=True)
class SimplexVector:
    values: np.ndarray
    sorted: bool = False

    def __post_init__(self):
        v = self.values
        if v.size == 0 or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
            raise ValidationError("simplex vector must be nonnegative and sum to 1")
        if self.sorted and np.any(np.diff(v) > 0):
            raise ValidationError("sorted simplex vector must be non-increasing")

    def __len__(self):
        return len(self.values)


def sample_gaussian_matrix(p: EnsembleParams, stream: RngStream) -> np.ndarray:
    """n x m matrix of standard complex Gaussians with E|G_ij|^2 = 1."""
    raw = stream.normal((p.n, p.m, 2)) * np.sqrt(0.5)
    return raw.view(np.complex128)[..., 0]


def wishart_spectrum_dense(p: EnsembleParams, stream: RngStream, full_length: bool = False) -> WishartSample:
    """Spectrum of G G^dagger from an explicitly sampled Gaussian matrix.

    For m < n the smaller Gram matrix G^dagger G is diagonalised (same nonzero
    eigenvalues); ``full_length`` pads the n - m structural zeros back in.
    """
    g = sample_gaussian_matrix(p, stream)
    trace = float(np.sum(g.real**2 + g.imag**2))
    if p.n <= p.m:
        gram = g @ g.conj().T
    else:
        gram = g.conj().T @ g
    gram = 0.5 * (gram + gram.conj().T)
    vals = hermitian_eigenvalues(gram, psd=True).values
    if full_length and p.m < p.n:
        vals = np.concatenate([vals, np.zeros(p.n - p.m)])
    return WishartSample(Spectrum(vals, n=p.n, m=p.m), trace)


def laguerre_bidiagonal_squares(p: EnsembleParams, stream: RngStream):
    """Squared entries of the lower-bidiagonal model B with B B^T ~ G G^dagger.

    Diagonal squares are Gamma(m - i, 1) for i = 0..n-1 and subdiagonal squares
    Gamma(n - 1 - i, 1) for i = 0..n-2; both come from Householder
    bidiagonalisation of a complex Gaussian matrix, whose column and row norms
    are sums of unit exponentials.
    """
    n, m = p.n, p.m
    shapes = np.concatenate([np.arange(m, m - n, -1), np.arange(n - 1, 0, -1)]).astype(np.float64)
    sq = stream.gamma(shapes)
    return sq[:n], sq[n:]


def wishart_spectrum_fast(p: EnsembleParams, stream: RngStream) -> WishartSample:
    """O(n^2) sampler through the tridiagonal B B^T of the bidiagonal model. Needs m >= n."""
    if p.m < p.n:
        raise ValidationError(f"fast Wishart path needs m >= n, got n={p.n}, m={p.m}")
    dsq, esq = laguerre_bidiagonal_squares(p, stream)
    diag = dsq.copy()
    diag[1:] += esq
    off = np.sqrt(dsq[:-1] * esq)
    vals = tridiagonal_eigenvalues(SymTridiagonal(diag, off))
    fro = float(np.sqrt(np.sum(diag**2) + 2.0 * np.sum(off**2)))
    vals = _clamp_psd(vals, fro)
    trace = float(dsq.sum() + esq.sum())
    return WishartSample(Spectrum(vals, n=p.n, m=p.m), trace)


def wishart_spectrum(p: EnsembleParams, stream: RngStream, sampler: str = "auto") -> WishartSample:
    """Dispatch to the dense or fast path. ``auto`` uses fast for n >= 64 when m >= n."""
    if sampler == "auto":
        sampler = "fast" if (p.n >= 64 and p.m >= p.n) else "dense"
    if sampler == "fast":
        return wishart_spectrum_fast(p, stream)
    if sampler == "dense":
        return wishart_spectrum_dense(p, stream)
    raise ValidationError(f"unknown sampler {sampler!r}")


def trace_normalise(w: WishartSample) -> SimplexVector:
    if not w.trace > 0:
        raise DegenerateInputError("cannot trace-normalise a spectrum with zero trace")
    vals = w.spectrum.values / w.trace
    # roundoff between the direct trace and the eigenvalue sum
    vals = vals / vals.sum()
    return SimplexVector(vals, sorted=True)


def sample_uniform_simplex(n: int, stream: RngStream) -> SimplexVector:
    if n < 1:
        raise ValidationError("n must be >= 1")
    z = stream.exponential(n)
    return SimplexVector(z / z.sum(), sorted=False)


def renyi_order_statistics(n: int, stream: RngStream) -> np.ndarray:
    """Ascending order statistics of n unit exponentials in O(n), unnormalised."""
    z = stream.exponential(n)
    return np.cumsum(z / np.arange(n, 0, -1, dtype=np.float64))


def sorted_uniform_simplex_renyi(n: int, stream: RngStream) -> SimplexVector:
    if n < 1:
        raise ValidationError("n must be >= 1")
    asc = renyi_order_statistics(n, stream)
    return SimplexVector(asc[::-1] / asc.sum(), sorted=True)
