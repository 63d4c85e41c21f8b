"""Dense linear algebra, low-rank factorization, and FFT primitives.

Everything here is either a building block for the fast algorithms or the
brute-force oracle they are tested against.  All functions are pure and all
returned arrays are freshly allocated.

Matrices are plain float64 numpy arrays in row-major order; `as_matrix`
enforces the construction invariants (2-D, finite entries).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import counting
from .errors import DimensionMismatch, PivotBreakdown


def as_matrix(a) -> np.ndarray:
    """Validate and return `a` as a float64 matrix (finite entries, 2-D)."""
    m = np.array(a, dtype=float, order="C")
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size and not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    return m


def as_vector(x) -> np.ndarray:
    v = np.array(x, dtype=float).reshape(-1)
    if v.size and not np.isfinite(v).all():
        raise ValueError("vector entries must be finite")
    return v


@dataclass(frozen=True)
class LowRankFactors:
    """Pair (left, right) with product = left @ right.T.

    left is m x r, right is n x r; r may be zero (empty factors of a
    numerically-zero matrix).
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        if self.left.ndim != 2 or self.right.ndim != 2:
            raise DimensionMismatch("factors must be 2-D")
        if self.left.shape[1] != self.right.shape[1]:
            raise DimensionMismatch("left and right must share the rank dimension")

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    def product(self) -> np.ndarray:
        return matmul(self.left, self.right.T)


def matmul(a, b) -> np.ndarray:
    """Deterministic dense product, the oracle currency.

    Summation order is whatever numpy's fixed kernel does; it is reproducible
    bit-for-bit per platform, which is all the oracle comparisons need.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[0]:
        raise DimensionMismatch(f"matmul: {a.shape} @ {b.shape}")
    counting.add(a.shape[0] * a.shape[1] * (b.shape[1] if b.ndim == 2 else 1))
    return a @ b


def dense_lu_no_pivot(a, pivot_tol: float = 1e-12):
    """Unpivoted LU of a square matrix: A = L U, L unit lower triangular.

    No pivoting ever -- the structured algorithms eliminate in natural order
    and this oracle must match that order.  Raises PivotBreakdown when a
    pivot falls below pivot_tol * max|A|.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise DimensionMismatch("LU needs a square matrix")
    u = a.copy()
    lower = np.eye(n)
    amax = np.abs(a).max() if n else 0.0
    threshold = pivot_tol * (amax if amax > 0 else 1.0)
    for k in range(n):
        piv = u[k, k]
        if abs(piv) < threshold:
            raise PivotBreakdown(k, piv)
        if k + 1 < n:
            lower[k + 1 :, k] = u[k + 1 :, k] / piv
            u[k + 1 :, k + 1 :] -= np.outer(lower[k + 1 :, k], u[k, k + 1 :])
            u[k + 1 :, k] = 0.0
            counting.add((n - k - 1) * (n - k))
    return lower, u


def numerical_rank(a, tol: float, absolute: bool = False) -> int:
    """Count of singular values above tol * sigma_max (or above tol if absolute)."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    cutoff = tol if absolute else tol * s[0]
    return int(np.count_nonzero(s > cutoff))


def truncated_factorization(a, tol: float, absolute: bool = False) -> LowRankFactors:
    """SVD-based low-rank factorization at relative threshold tol * sigma_max.

    Returns (left, right) with ||a - left @ right.T||_2 <= tol * ||a||_2.
    Rank zero (empty factors) is the canonical answer for a numerically zero
    matrix.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    if a.size == 0:
        return LowRankFactors(np.zeros((m, 0)), np.zeros((n, 0)))
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    counting.add(m * n * min(m, n))
    if s.size == 0 or s[0] == 0.0:
        return LowRankFactors(np.zeros((m, 0)), np.zeros((n, 0)))
    cutoff = tol if absolute else tol * s[0]
    r = int(np.count_nonzero(s > cutoff))
    return LowRankFactors(u[:, :r] * s[:r], vt[:r].T.copy())


# ---------------------------------------------------------------------------
# FFT: radix-2 iterative with precomputed twiddles.  Predictable and adequate
# at desk scale; lengths must be powers of two (callers pad).

_twiddle_cache: dict[int, np.ndarray] = {}
_bitrev_cache: dict[int, np.ndarray] = {}


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bitrev(n: int) -> np.ndarray:
    idx = _bitrev_cache.get(n)
    if idx is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        rev = np.zeros(n, dtype=int)
        for _ in range(bits):
            rev = (rev << 1) | (idx & 1)
            idx >>= 1
        idx = rev
        _bitrev_cache[n] = idx
    return idx


def _twiddles(m: int) -> np.ndarray:
    w = _twiddle_cache.get(m)
    if w is None:
        w = np.exp(-2j * np.pi * np.arange(m // 2) / m)
        _twiddle_cache[m] = w
    return w


def fft(x) -> np.ndarray:
    """Unnormalized forward DFT of a power-of-two length vector."""
    a = np.array(x, dtype=complex).reshape(-1)
    n = a.size
    if not _is_pow2(n):
        raise DimensionMismatch(f"fft length must be a power of two, got {n}")
    if n == 1:
        return a
    a = a[_bitrev(n)]
    m = 2
    while m <= n:
        half = m // 2
        w = _twiddles(m)
        blocks = a.reshape(-1, m)
        t = blocks[:, half:] * w
        u = blocks[:, :half].copy()
        blocks[:, :half] = u + t
        blocks[:, half:] = u - t
        m *= 2
    counting.add(int(5 * n * math.log2(n)))
    return a


def ifft(x) -> np.ndarray:
    """Inverse of `fft` (so ifft(fft(x)) == x)."""
    a = np.array(x, dtype=complex).reshape(-1)
    return np.conj(fft(np.conj(a))) / a.size


def _next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def toeplitz_dense(first_col, first_row) -> np.ndarray:
    """Materialize the Toeplitz matrix with the given first column and row."""
    c = as_vector(first_col)
    r = as_vector(first_row)
    if c.size != r.size:
        raise DimensionMismatch("first_col and first_row must have equal length")
    if c.size and c[0] != r[0]:
        raise DimensionMismatch("corner mismatch: first_col[0] != first_row[0]")
    n = c.size
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    d = i - j
    vals = np.concatenate([r[:0:-1], c])  # index by d + n - 1
    return vals[d + n - 1]


def toeplitz_matvec(first_col, first_row, x) -> np.ndarray:
    """T @ x for a Toeplitz T via circulant embedding and one FFT multiply."""
    c = as_vector(first_col)
    r = as_vector(first_row)
    x = as_vector(x)
    n = c.size
    if r.size != n or x.size != n:
        raise DimensionMismatch("toeplitz_matvec: length mismatch")
    if n == 0:
        return np.zeros(0)
    if c[0] != r[0]:
        raise DimensionMismatch("corner mismatch: first_col[0] != first_row[0]")
    m = _next_pow2(2 * n)
    col = np.zeros(m)
    col[:n] = c
    if n > 1:
        col[m - n + 1 :] = r[:0:-1]
    xx = np.zeros(m)
    xx[:n] = x
    y = ifft(fft(col) * fft(xx))
    counting.add(m)
    return np.real(y[:n])
