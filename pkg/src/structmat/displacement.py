"""Displacement-structured matrices.

A matrix T is represented by the operator pair (A, B) and generators (P, Q)
with T - A T B^T = P Q^T.  The operators are either down-shift matrices
(ones on the subdiagonal, so Z e_j = e_{j+1}) or diagonal matrices; both are
lower triangular and support O(n) application.  Shift operators carry a
segment list so that block-diagonal stacks of shifts (needed by the
augmented-matrix inversion) live in the same class; a plain shift is the
single-segment case.

The generalized Schur algorithm eliminates in natural order on the
generators, recompressing after each step; its output is pinned against the
dense Schur-complement oracle in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import counting
from .errors import (
    DimensionMismatch,
    PivotBreakdown,
    PoleCollision,
    SeriesDivergence,
    SingularOperator,
    UnsupportedOperator,
    ZeroY,
)
from .kernel import (
    LowRankFactors,
    as_matrix,
    as_vector,
    matmul,
    numerical_rank,
    toeplitz_matvec,
    truncated_factorization,
)

STEIN_TOL = 1e-14
DEFAULT_PIVOT_TOL = 1e-12
RECOMPRESS_TOL = 1e-13


@dataclass(frozen=True)
class DisplacementOp:
    """Shift or diagonal displacement operator factor.

    kind is "shift" (ones on the subdiagonal within each segment) or
    "diagonal" (diag(values)).  Both are lower triangular.
    """

    kind: str
    size: int
    values: np.ndarray | None = None
    segments: tuple[int, ...] | None = None

    @staticmethod
    def shift(n: int, segments=None) -> "DisplacementOp":
        segs = tuple(segments) if segments is not None else (n,)
        if sum(segs) != n or any(s <= 0 for s in segs):
            raise DimensionMismatch("shift segments must be positive and sum to size")
        return DisplacementOp("shift", n, None, segs)

    @staticmethod
    def diagonal(values) -> "DisplacementOp":
        v = as_vector(values)
        return DisplacementOp("diagonal", v.size, v, None)

    @property
    def is_shift(self) -> bool:
        return self.kind == "shift"

    @property
    def is_nilpotent(self) -> bool:
        return self.is_shift

    def first_entry(self) -> float:
        """The (0, 0) entry (a shift has zero diagonal)."""
        if self.is_shift:
            return 0.0
        return float(self.values[0])

    def _segment_starts(self) -> np.ndarray:
        return np.cumsum((0,) + self.segments[:-1])

    def apply(self, m: np.ndarray) -> np.ndarray:
        """A @ m for a vector or matrix, in O(size * cols)."""
        m = np.asarray(m, dtype=float)
        if m.shape[0] != self.size:
            raise DimensionMismatch("operator/operand size mismatch")
        counting.add(m.size)
        if self.kind == "diagonal":
            return (self.values * m.T).T
        out = np.zeros_like(m)
        if self.size:
            out[1:] = m[:-1]
            out[self._segment_starts()] = 0.0
        return out

    def apply_t(self, m: np.ndarray) -> np.ndarray:
        """A^T @ m."""
        m = np.asarray(m, dtype=float)
        if m.shape[0] != self.size:
            raise DimensionMismatch("operator/operand size mismatch")
        counting.add(m.size)
        if self.kind == "diagonal":
            return (self.values * m.T).T
        out = np.zeros_like(m)
        if self.size:
            out[:-1] = m[1:]
            ends = self._segment_starts() - 1
            out[ends[1:]] = 0.0
        return out

    def trailing(self, k: int) -> "DisplacementOp":
        """The trailing principal submatrix after deleting the first k rows/cols."""
        if not 0 <= k <= self.size:
            raise DimensionMismatch("trailing size out of range")
        if self.kind == "diagonal":
            return DisplacementOp.diagonal(self.values[k:])
        segs = []
        drop = k
        for s in self.segments:
            if drop >= s:
                drop -= s
            else:
                segs.append(s - drop)
                drop = 0
        if not segs:
            segs = []
        return DisplacementOp("shift", self.size - k, None, tuple(segs) or ())

    def dense(self) -> np.ndarray:
        if self.kind == "diagonal":
            return np.diag(self.values)
        z = np.zeros((self.size, self.size))
        pos = 0
        for s in self.segments:
            for i in range(1, s):
                z[pos + i, pos + i - 1] = 1.0
            pos += s
        return z

    def same_as(self, other: "DisplacementOp") -> bool:
        if self.kind != other.kind or self.size != other.size:
            return False
        if self.kind == "diagonal":
            return bool(np.array_equal(self.values, other.values))
        return self.segments == other.segments


def _check_stein(opa: DisplacementOp, opb: DisplacementOp):
    if opa.kind == "diagonal" and opb.kind == "diagonal":
        prod = np.abs(1.0 - np.outer(opa.values, opb.values))
        if prod.size and prod.min() < STEIN_TOL:
            raise SingularOperator("a_i * b_j == 1: Stein equation not uniquely solvable")


@dataclass(frozen=True)
class GeneratorForm:
    """Generators (P, Q) of the unique T with T - A T B^T = P Q^T."""

    opa: DisplacementOp
    opb: DisplacementOp
    p: np.ndarray
    q: np.ndarray
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        n = self.opa.size
        if self.opb.size != n or self.p.shape[0] != n or self.q.shape[0] != n:
            raise DimensionMismatch("generator sizes must match operator size")
        if self.p.shape[1] != self.q.shape[1]:
            raise DimensionMismatch("P and Q must have the same number of columns")
        if self.check:
            _check_stein(self.opa, self.opb)

    @property
    def n(self) -> int:
        return self.opa.size

    @property
    def width(self) -> int:
        return self.p.shape[1]


def _compress_pair(p, q, tol):
    """Shrink a generator pair to the numerical rank of P Q^T at relative tol."""
    n, w = p.shape
    if w == 0:
        return p, q
    qp, rp = np.linalg.qr(p)
    qq, rq = np.linalg.qr(q)
    core = rp @ rq.T
    u, s, vt = np.linalg.svd(core)
    counting.add(2 * n * w * w + w**3)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((n, 0)), np.zeros((q.shape[0], 0))
    r = int(np.count_nonzero(s > tol * s[0]))
    return qp @ (u[:, :r] * s[:r]), qq @ vt[:r].T


# ---------------------------------------------------------------------------
# dense-side measurements

def apply_displacement(t, opa: DisplacementOp, opb: DisplacementOp) -> np.ndarray:
    """T - A T B^T, computed densely (the measurement used everywhere)."""
    t = as_matrix(t)
    if t.shape != (opa.size, opb.size):
        raise DimensionMismatch("matrix/operator size mismatch")
    a = opa.dense()
    b = opb.dense()
    return t - a @ t @ b.T


def displacement_rank(t, opa, opb, tol: float) -> int:
    return numerical_rank(apply_displacement(t, opa, opb), tol)


# ---------------------------------------------------------------------------
# standard generator constructions

def generators_toeplitz(first_col, first_row) -> GeneratorForm:
    """Shift/shift generators (width <= 2) of a Toeplitz matrix."""
    c = as_vector(first_col)
    r = as_vector(first_row)
    n = c.size
    if r.size != n:
        raise DimensionMismatch("first_col and first_row must have equal length")
    if n and c[0] != r[0]:
        raise DimensionMismatch("corner mismatch: first_col[0] != first_row[0]")
    # T - Z T Z^T is supported on the first row and column only:
    # e_1 r^T + (c - c_0 e_1) e_1^T
    e1 = np.zeros(n)
    if n:
        e1[0] = 1.0
    cc = c.copy()
    if n:
        cc[0] = 0.0
    p = np.column_stack([e1, cc])
    q = np.column_stack([r, e1])
    p, q = _compress_pair(p, q, RECOMPRESS_TOL)
    z = DisplacementOp.shift(n)
    return GeneratorForm(z, z, p, q)


def generators_vandermonde(x) -> GeneratorForm:
    """Diagonal/shift generators (width 1) of V_{i,j} = x_i^j."""
    x = as_vector(x)
    n = x.size
    p = np.ones((n, 1))
    q = np.zeros((n, 1))
    if n:
        q[0, 0] = 1.0
    return GeneratorForm(DisplacementOp.diagonal(x), DisplacementOp.shift(n), p, q)


def generators_cauchy(x, y) -> GeneratorForm:
    """Diagonal/diagonal generators (width 1) of C_{i,j} = 1/(y_i - x_j)."""
    x = as_vector(x)
    y = as_vector(y)
    if x.size != y.size:
        raise DimensionMismatch("x and y must have equal length")
    if np.any(y == 0.0):
        raise ZeroY("all y_i must be nonzero")
    if x.size and np.min(np.abs(np.subtract.outer(y, x))) == 0.0:
        raise PoleCollision("y_i == x_j for some pair")
    opa = DisplacementOp.diagonal(1.0 / y)
    opb = DisplacementOp.diagonal(x)
    p = (1.0 / y).reshape(-1, 1)
    q = np.ones((x.size, 1))
    return GeneratorForm(opa, opb, p, q)


def cauchy_dense(x, y) -> np.ndarray:
    x = as_vector(x)
    y = as_vector(y)
    return 1.0 / np.subtract.outer(y, x)


def vandermonde_dense(x) -> np.ndarray:
    x = as_vector(x)
    return np.vander(x, increasing=True)


# ---------------------------------------------------------------------------
# reconstruction (the testing bridge)

def reconstruct(g: GeneratorForm) -> np.ndarray:
    """Solve T - A T B^T = P Q^T for the unique dense T.

    Shift-type operators are nilpotent, so the series solution terminates;
    each recurrence below is just the series summed in place.  The
    diagonal/diagonal case uses the closed form.
    """
    n = g.n
    c = g.p @ g.q.T if g.width else np.zeros((n, n))
    a, b = g.opa, g.opb
    if a.kind == "diagonal" and b.kind == "diagonal":
        prods = np.outer(a.values, b.values)
        if prods.size and np.max(np.abs(prods)) >= 1.0:
            raise SeriesDivergence("|a_i * b_j| >= 1 and neither operator nilpotent")
        return c / (1.0 - prods)
    t = c.copy()
    if a.kind == "shift" and b.kind == "shift":
        astart = set(a._segment_starts().tolist())
        bstart = set(b._segment_starts().tolist())
        jmask = np.array([j not in bstart for j in range(n)])
        for i in range(1, n):
            if i in astart:
                continue
            t[i, 1:][jmask[1:]] += t[i - 1, :-1][jmask[1:]]
    elif a.kind == "diagonal":  # diagonal / shift
        bstart = set(b._segment_starts().tolist())
        for j in range(1, n):
            if j in bstart:
                continue
            t[:, j] += a.values * t[:, j - 1]
    else:  # shift / diagonal
        astart = set(a._segment_starts().tolist())
        for i in range(1, n):
            if i in astart:
                continue
            t[i, :] += b.values * t[i - 1, :]
    return t


def first_row_col(g: GeneratorForm):
    """(first column, first row) of T from its generators, in O(n p)."""
    n = g.n
    a, b = g.opa, g.opb
    if n == 0:
        return np.zeros(0), np.zeros(0)
    rhs_col = g.p @ g.q[0] if g.width else np.zeros(n)
    rhs_row = g.q @ g.p[0] if g.width else np.zeros(n)
    counting.add(2 * n * max(g.width, 1))
    t_col = _solve_i_minus_scaled(a, b.first_entry(), rhs_col)
    t_row = _solve_i_minus_scaled(b, a.first_entry(), rhs_row)
    return t_col, t_row


def _solve_i_minus_scaled(op: DisplacementOp, scale: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - scale * Op) v = rhs in O(n)."""
    if scale == 0.0:
        return rhs.copy()
    if op.kind == "diagonal":
        denom = 1.0 - scale * op.values
        if np.min(np.abs(denom)) < STEIN_TOL:
            raise SingularOperator("|1 - a_i b_j| below tolerance in first row/col")
        return rhs / denom
    v = rhs.copy()
    starts = set(op._segment_starts().tolist())
    for i in range(1, op.size):
        if i not in starts:
            v[i] += scale * v[i - 1]
    return v


# ---------------------------------------------------------------------------
# the generalized Schur algorithm

@dataclass(frozen=True)
class GSLUResult:
    l: np.ndarray
    u: np.ndarray
    steps_completed: int


def schur_step(g: GeneratorForm, t_col, t_row, pivot_tol: float = DEFAULT_PIVOT_TOL):
    """One elimination step on the generators.

    Returns (l_col, u_row, g_next) where g_next generates the dense Schur
    complement under the trailing operators.  The update appends the rank-2
    correction -c r^T/d + (A c)(B r)^T/d to the generator pair, drops the
    first row, and recompresses.
    """
    t_col = as_vector(t_col)
    t_row = as_vector(t_row)
    n = g.n
    if t_col.size != n or t_row.size != n:
        raise DimensionMismatch("first row/column length mismatch")
    scale = max(np.max(np.abs(t_col), initial=0.0), np.max(np.abs(t_row), initial=0.0))
    d = t_col[0]
    if abs(d) < pivot_tol * (scale if scale > 0 else 1.0):
        raise PivotBreakdown(0, d)
    l_col = t_col / d
    u_row = t_row.copy()
    if n == 1:
        empty = np.zeros((0, 0))
        g_next = GeneratorForm(g.opa.trailing(1), g.opb.trailing(1), empty, empty, check=False)
        return l_col, u_row, g_next
    pa = np.column_stack([g.p, -t_col / d, g.opa.apply(t_col) / d])
    qa = np.column_stack([g.q, t_row, g.opb.apply(t_row)])
    counting.add(n * (g.width + 4))
    p2, q2 = _compress_pair(pa[1:], qa[1:], RECOMPRESS_TOL)
    g_next = GeneratorForm(g.opa.trailing(1), g.opb.trailing(1), p2, q2, check=False)
    return l_col, u_row, g_next


def generalized_schur_lu(g: GeneratorForm, pivot_tol: float = DEFAULT_PIVOT_TOL) -> GSLUResult:
    """LU factorization of T from its generators in O(n^2) for fixed width."""
    n = g.n
    lower = np.eye(n)
    upper = np.zeros((n, n))
    cur = g
    for k in range(n):
        t_col, t_row = first_row_col(cur)
        try:
            l_col, u_row, cur = schur_step(cur, t_col, t_row, pivot_tol)
        except PivotBreakdown as e:
            raise PivotBreakdown(k, e.pivot) from None
        lower[k:, k] = l_col
        upper[k, k:] = u_row
    return GSLUResult(lower, upper, n)


# ---------------------------------------------------------------------------
# inversion via the augmented matrix [[T, I], [-I, 0]]

def _identity_minus_abt(opa: DisplacementOp, opb: DisplacementOp) -> LowRankFactors:
    """Low-rank factors of I - A B^T."""
    n = opa.size
    if opa.is_shift and opb.is_shift and opa.segments == opb.segments:
        # Z Z^T zeroes exactly the segment-start diagonal entries.
        starts = opa._segment_starts()
        f = np.zeros((n, len(starts)))
        for j, s in enumerate(starts):
            f[s, j] = 1.0
        return LowRankFactors(f, f.copy())
    dense = np.eye(n) - opa.dense() @ opb.dense().T
    return truncated_factorization(dense, 1e-12)


def _concat_op(op: DisplacementOp) -> DisplacementOp:
    """block-diag(Op, Op) as a single operator of twice the size."""
    if op.kind == "diagonal":
        return DisplacementOp.diagonal(np.concatenate([op.values, op.values]))
    return DisplacementOp.shift(2 * op.size, op.segments + op.segments)


def invert_via_augmented(g: GeneratorForm, pivot_tol: float = DEFAULT_PIVOT_TOL) -> GeneratorForm:
    """Generators of T^{-1}, computed by running the Schur algorithm half-way
    through the augmented matrix M = [[T, I], [-I, 0]] with the block-diagonal
    operator choice diag(A, A), diag(B, B)."""
    n = g.n
    lr = _identity_minus_abt(g.opa, g.opb)
    s = lr.rank
    if s > g.width + 4:
        raise UnsupportedOperator(
            f"rank(I - A B^T) = {s} is too large for an efficient augmented representation"
        )
    f, h = lr.left, lr.right
    w = g.width
    pm = np.zeros((2 * n, w + 2 * s))
    qm = np.zeros((2 * n, w + 2 * s))
    pm[:n, :w] = g.p
    pm[:n, w : w + s] = f
    pm[n:, w + s :] = f
    qm[:n, :w] = g.q
    qm[:n, w + s :] = -h
    qm[n:, w : w + s] = h
    cur = GeneratorForm(_concat_op(g.opa), _concat_op(g.opb), pm, qm, check=False)
    for k in range(n):
        t_col, t_row = first_row_col(cur)
        try:
            _, _, cur = schur_step(cur, t_col, t_row, pivot_tol)
        except PivotBreakdown as e:
            raise PivotBreakdown(k, e.pivot) from None
    p2, q2 = _compress_pair(cur.p, cur.q, RECOMPRESS_TOL)
    # the inverse satisfies the rank identity under the swapped pair (B, A);
    # every operator pair that survives the rank guard has A == B, so the
    # swap is a relabeling, not a recomputation
    return GeneratorForm(cur.opb, cur.opa, p2, q2, check=False)


# ---------------------------------------------------------------------------
# fast application

def gs_apply_inverse(ginv: GeneratorForm, x) -> np.ndarray:
    """Apply a shift/shift generator form (e.g. a Toeplitz inverse) to x.

    Uses the terminating series: T = sum_l (Z^l P)(Z^l Q)^T, i.e. a sum of
    p products of lower- and upper-triangular Toeplitz matrices, each applied
    by FFT (the Gohberg--Semencul evaluation).
    """
    if not (ginv.opa.is_shift and ginv.opb.is_shift):
        raise UnsupportedOperator("fast inverse application needs shift/shift operators")
    if ginv.opa.segments != (ginv.n,) or ginv.opb.segments != (ginv.n,):
        raise UnsupportedOperator("fast inverse application needs plain shift operators")
    x = as_vector(x)
    n = ginv.n
    if x.size != n:
        raise DimensionMismatch("vector length mismatch")
    y = np.zeros(n)
    e1 = np.zeros(n)
    if n:
        e1[0] = 1.0
    for c in range(ginv.width):
        pc = ginv.p[:, c]
        qc = ginv.q[:, c]
        inner = toeplitz_matvec(qc[0] * e1, qc, x)  # upper-triangular Toeplitz
        y += toeplitz_matvec(pc, pc[0] * e1, inner)  # lower-triangular Toeplitz
    return y


def cauchy_matvec(g: GeneratorForm, x, chunk: int = 256) -> np.ndarray:
    """T @ x for diagonal/diagonal generators, streaming rows in chunks."""
    if g.opa.kind != "diagonal" or g.opb.kind != "diagonal":
        raise UnsupportedOperator("cauchy_matvec needs diagonal/diagonal operators")
    x = as_vector(x)
    n = g.n
    if x.size != n:
        raise DimensionMismatch("vector length mismatch")
    if g.width == 0:
        return np.zeros(n)
    a, b = g.opa.values, g.opb.values
    y = np.zeros(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        denom = 1.0 - np.outer(a[lo:hi], b)
        if np.min(np.abs(denom)) < STEIN_TOL:
            raise SingularOperator("a_i * b_j == 1 while streaming rows")
        rows = (g.p[lo:hi] @ g.q.T) / denom
        y[lo:hi] = rows @ x
        counting.add((hi - lo) * n * (g.width + 1))
    return y


def generator_apply(g: GeneratorForm, x) -> np.ndarray:
    """T @ x through the fast path available for g's operator pair."""
    if g.opa.is_shift and g.opb.is_shift:
        if g.opa.segments == (g.n,) and g.opb.segments == (g.n,):
            return gs_apply_inverse(g, x)
    if g.opa.kind == "diagonal" and g.opb.kind == "diagonal":
        return cauchy_matvec(g, x)
    # mixed case: terminating series, one O(n p) term per power
    x = as_vector(x)
    y = np.zeros(g.n)
    pl, ql = g.p.copy(), g.q.copy()
    for _ in range(g.n):
        if not (pl.any() and ql.any()):
            break
        y += pl @ (ql.T @ x)
        counting.add(2 * g.n * g.width)
        pl = g.opa.apply(pl)
        ql = g.opb.apply(ql)
    return y


def generator_apply_transpose(g: GeneratorForm, x) -> np.ndarray:
    """T^T @ x (the transpose has generators (B, A, Q, P))."""
    gt = GeneratorForm(g.opb, g.opa, g.q, g.p, check=False)
    return generator_apply(gt, x)


# ---------------------------------------------------------------------------
# generator arithmetic

def _require_same_ops(g1: GeneratorForm, g2: GeneratorForm):
    if not (g1.opa.same_as(g2.opa) and g1.opb.same_as(g2.opb)):
        raise DimensionMismatch("operator pairs must be identical")


def generator_add(g1: GeneratorForm, g2: GeneratorForm, tol: float = 1e-12) -> GeneratorForm:
    """Generators of T1 + T2: column concatenation plus recompression."""
    _require_same_ops(g1, g2)
    p = np.column_stack([g1.p, g2.p]) if g1.width + g2.width else np.zeros((g1.n, 0))
    q = np.column_stack([g1.q, g2.q]) if g1.width + g2.width else np.zeros((g1.n, 0))
    p, q = _compress_pair(p, q, tol)
    return GeneratorForm(g1.opa, g1.opb, p, q, check=False)


def generator_multiply(
    g1: GeneratorForm,
    g2: GeneratorForm,
    xy: LowRankFactors,
    tol: float = 1e-12,
) -> GeneratorForm:
    """Generators of T1 T2 given low-rank factors xy of I - B^T A.

    L[A,B](T1 T2) = P1 (T2^T Q1)^T + (A T1 B^T P2) Q2^T - (A T1 X)(B T2^T Y)^T,
    so the output width is at most p1 + p2 + rank(I - B^T A).
    """
    _require_same_ops(g1, g2)
    n = g1.n
    if xy.left.shape[0] != n or xy.right.shape[0] != n:
        raise DimensionMismatch("xy factors must have n rows")
    if xy.rank > n // 2:
        raise UnsupportedOperator(
            "rank(I - B^T A) exceeds n/2: the product representation would not be efficient"
        )
    a, b = g1.opa, g1.opb

    def t1_apply(v):
        return generator_apply(g1, v)

    def t2t_apply(v):
        return generator_apply_transpose(g2, v)

    cols_p = [g1.p]
    cols_q = [np.column_stack([t2t_apply(g1.q[:, c]) for c in range(g1.width)])
              if g1.width else np.zeros((n, 0))]
    if g2.width:
        btp2 = b.apply_t(g2.p)
        at1btp2 = np.column_stack([a.apply(t1_apply(btp2[:, c])) for c in range(g2.width)])
    else:
        at1btp2 = np.zeros((n, 0))
    cols_p.append(at1btp2)
    cols_q.append(g2.q)
    if xy.rank:
        at1x = np.column_stack([a.apply(t1_apply(xy.left[:, c])) for c in range(xy.rank)])
        bt2ty = np.column_stack([b.apply(t2t_apply(xy.right[:, c])) for c in range(xy.rank)])
    else:
        at1x = np.zeros((n, 0))
        bt2ty = np.zeros((n, 0))
    cols_p.append(-at1x)
    cols_q.append(bt2ty)
    p = np.column_stack(cols_p)
    q = np.column_stack(cols_q)
    p, q = _compress_pair(p, q, tol)
    return GeneratorForm(g1.opa, g1.opb, p, q, check=False)
