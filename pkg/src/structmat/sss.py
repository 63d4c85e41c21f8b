"""Sequentially semi-separable representations.

Block convention (0-based, blocks 0..nb-1 of sizes n_i):

    A[i][j] = D_i                                   i == j
    A[i][j] = U_i W_{i+1} ... W_{j-1} V_j^T          i < j
    A[i][j] = P_i R_{i-1} ... R_{j+1} Q_j^T          i > j

Chain widths: ru[i] = cols(U_i) is the rank of the upper Hankel block
A[0..i, i+1..] (ru of the last block is 0); V_j has ru[j-1] columns and
W_i maps ru[i-1] -> ru[i].  On the lower side rl[i] = cols(P_i) is the
rank of the lower Hankel block A[i.., 0..i-1] (rl[0] = 0), Q_j has rl[j+1]
columns and R_i maps rl[i] -> rl[i+1].

The lower chain of A is exactly the upper chain of A^T under
(U, W, V) <-> (Q, R^T, P), which the code exploits throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import counting
from .errors import BandViolation, DimensionMismatch, PivotBreakdown
from .kernel import as_matrix, as_vector, dense_lu_no_pivot

DEFAULT_RECOMPRESS_TOL = 1e-12


@dataclass(eq=False)
class SSSForm:
    block_sizes: tuple
    d: list  # diagonal blocks
    u: list
    w: list
    v: list
    p: list
    r: list
    q: list

    def __post_init__(self):
        self.block_sizes = tuple(int(b) for b in self.block_sizes)
        nb = len(self.block_sizes)
        if any(b <= 0 for b in self.block_sizes):
            raise DimensionMismatch("block sizes must be positive")
        for name, seq in (("d", self.d), ("u", self.u), ("w", self.w), ("v", self.v),
                          ("p", self.p), ("r", self.r), ("q", self.q)):
            if len(seq) != nb:
                raise DimensionMismatch(f"{name} must have one entry per block")
        # dimension walk over both chains
        for i, ni in enumerate(self.block_sizes):
            if self.d[i].shape != (ni, ni):
                raise DimensionMismatch(f"D[{i}] shape {self.d[i].shape} != ({ni},{ni})")
            if self.u[i].shape[0] != ni or self.v[i].shape[0] != ni:
                raise DimensionMismatch(f"U/V[{i}] row count must be {ni}")
            if self.p[i].shape[0] != ni or self.q[i].shape[0] != ni:
                raise DimensionMismatch(f"P/Q[{i}] row count must be {ni}")
        ru = self.upper_ranks
        rl = self.lower_ranks
        for i in range(nb):
            ru_prev = ru[i - 1] if i > 0 else 0
            if self.v[i].shape[1] != ru_prev:
                raise DimensionMismatch(f"V[{i}] width {self.v[i].shape[1]} != ru[{i-1}]")
            if self.w[i].shape != (ru_prev, ru[i]):
                raise DimensionMismatch(f"W[{i}] shape mismatch")
            rl_next = rl[i + 1] if i + 1 < nb else 0
            if self.q[i].shape[1] != rl_next:
                raise DimensionMismatch(f"Q[{i}] width {self.q[i].shape[1]} != rl[{i+1}]")
            if self.r[i].shape != (rl_next, rl[i]):
                raise DimensionMismatch(f"R[{i}] shape mismatch")
        if nb and (self.u[-1].shape[1] != 0 or self.p[0].shape[1] != 0):
            raise DimensionMismatch("boundary chain widths must be zero")

    @property
    def nb(self) -> int:
        return len(self.block_sizes)

    @property
    def n(self) -> int:
        return sum(self.block_sizes)

    @property
    def upper_ranks(self):
        return [m.shape[1] for m in self.u]

    @property
    def lower_ranks(self):
        return [0] + [m.shape[1] for m in self.q[:-1]] + ([0] if self.nb else [])

    def offsets(self):
        return np.cumsum((0,) + self.block_sizes)


def _zero_chain(block_sizes):
    nb = len(block_sizes)
    u = [np.zeros((b, 0)) for b in block_sizes]
    w = [np.zeros((0, 0)) for _ in range(nb)]
    v = [np.zeros((b, 0)) for b in block_sizes]
    return u, w, v


def sss_zero(block_sizes) -> SSSForm:
    d = [np.zeros((b, b)) for b in block_sizes]
    u, w, v = _zero_chain(block_sizes)
    p, rr, q = _zero_chain(block_sizes)
    return SSSForm(tuple(block_sizes), d, u, w, v, list(p), [m.T for m in rr], list(q))


def sss_identity(block_sizes) -> SSSForm:
    s = sss_zero(block_sizes)
    s.d = [np.eye(b) for b in block_sizes]
    return s


def sss_transpose(s: SSSForm) -> SSSForm:
    return SSSForm(
        s.block_sizes,
        [m.T.copy() for m in s.d],
        [m.copy() for m in s.q],
        [m.T.copy() for m in s.r],
        [m.copy() for m in s.p],
        [m.copy() for m in s.v],
        [m.T.copy() for m in s.w],
        [m.copy() for m in s.u],
    )


def sss_scale(s: SSSForm, alpha: float) -> SSSForm:
    out = SSSForm(s.block_sizes, [alpha * m for m in s.d],
                  [alpha * m for m in s.u], [m.copy() for m in s.w], [m.copy() for m in s.v],
                  [alpha * m for m in s.p], [m.copy() for m in s.r], [m.copy() for m in s.q])
    return out


# ---------------------------------------------------------------------------
# construction

def _svd_truncate(m, tol):
    """Orthonormal column basis and compressed remainder at relative tol."""
    if m.size == 0 or min(m.shape) == 0:
        return np.zeros((m.shape[0], 0)), np.zeros((0, m.shape[1]))
    uu, s, vt = np.linalg.svd(m, full_matrices=False)
    counting.add(m.shape[0] * m.shape[1] * min(m.shape))
    if s[0] == 0.0:
        return np.zeros((m.shape[0], 0)), np.zeros((0, m.shape[1]))
    rank = int(np.count_nonzero(s > tol * s[0]))
    return uu[:, :rank], s[:rank, None] * vt[:rank]


def _build_upper_chain(a, block_sizes, tol):
    """Left-to-right construction of (U, W, V) for the upper triangle of a.

    Each step factors the stacked matrix [previous remainder; new block row],
    so every upper Hankel block is compressed exactly once and the stacked
    column bases stay orthonormal (which is what makes the chain ranks equal
    the Hankel-block numerical ranks).
    """
    nb = len(block_sizes)
    off = np.cumsum((0,) + tuple(block_sizes))
    u = [None] * nb
    w = [None] * nb
    v = [None] * nb
    z = np.zeros((0, a.shape[1]))  # remainder over columns off[i]..n
    for i in range(nb):
        ni = block_sizes[i]
        v[i] = z[:, :ni].T.copy()
        w_rows = z.shape[0]
        if i == nb - 1:
            u[i] = np.zeros((ni, 0))
            w[i] = np.zeros((w_rows, 0))
            break
        stacked = np.vstack([z[:, ni:], a[off[i]:off[i + 1], off[i + 1]:]])
        basis, z = _svd_truncate(stacked, tol)
        w[i] = basis[:w_rows]
        u[i] = basis[w_rows:]
    if nb == 1:
        u[0] = np.zeros((block_sizes[0], 0))
        w[0] = np.zeros((0, 0))
    return u, w, v


def sss_construct(a, block_sizes, tol: float = 1e-12) -> SSSForm:
    """Build an SSS representation of a dense matrix in O(n^2) work."""
    a = as_matrix(a)
    block_sizes = tuple(int(b) for b in block_sizes)
    if sum(block_sizes) != a.shape[0] or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("block sizes must sum to the (square) matrix size")
    off = np.cumsum((0,) + block_sizes)
    d = [a[off[i]:off[i + 1], off[i]:off[i + 1]].copy() for i in range(len(block_sizes))]
    u, w, v = _build_upper_chain(a, block_sizes, tol)
    uq, wr, vp = _build_upper_chain(a.T.copy(), block_sizes, tol)
    p = vp
    r = [m.T.copy() for m in wr]
    q = uq
    return SSSForm(block_sizes, d, u, w, v, p, r, q)


def default_block_sizes(n: int, nb: int = 16):
    """Near-uniform partition of n into at most nb blocks."""
    nb = max(1, min(nb, n))
    base = n // nb
    rem = n % nb
    return tuple(base + (1 if i < rem else 0) for i in range(nb))


def sss_from_banded(a, bandwidth: int) -> SSSForm:
    """Direct SSS components of a banded matrix with block size == bandwidth."""
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch("banded input must be square")
    if bandwidth < 1:
        raise DimensionMismatch("bandwidth must be >= 1")
    i, j = np.indices(a.shape)
    if np.any(a[np.abs(i - j) > bandwidth] != 0.0):
        raise BandViolation(f"entries outside bandwidth {bandwidth}")
    sizes = []
    rest = n
    while rest > 0:
        sizes.append(min(bandwidth, rest))
        rest -= sizes[-1]
    sizes = tuple(sizes)
    nb = len(sizes)
    off = np.cumsum((0,) + sizes)
    d = [a[off[i]:off[i + 1], off[i]:off[i + 1]].copy() for i in range(nb)]
    u = [a[off[i]:off[i + 1], off[i + 1]:off[i + 2]].copy() if i < nb - 1
         else np.zeros((sizes[i], 0)) for i in range(nb)]
    v = [np.eye(sizes[i]) if i > 0 else np.zeros((sizes[0], 0)) for i in range(nb)]
    w = [np.zeros((v[i].shape[1], u[i].shape[1])) for i in range(nb)]
    p = [a[off[i]:off[i + 1], off[i - 1]:off[i]].copy() if i > 0
         else np.zeros((sizes[0], 0)) for i in range(nb)]
    q = [np.eye(sizes[i]) if i < nb - 1 else np.zeros((sizes[i], 0)) for i in range(nb)]
    r = [np.zeros((q[i].shape[1], p[i].shape[1])) for i in range(nb)]
    return SSSForm(sizes, d, u, w, v, p, r, q)


# ---------------------------------------------------------------------------
# dense bridge and matvec

def sss_to_dense(s: SSSForm) -> np.ndarray:
    n = s.n
    off = s.offsets()
    a = np.zeros((n, n))
    for i in range(s.nb):
        a[off[i]:off[i + 1], off[i]:off[i + 1]] = s.d[i]
        cur = s.u[i]
        for j in range(i + 1, s.nb):
            a[off[i]:off[i + 1], off[j]:off[j + 1]] = cur @ s.v[j].T
            if j < s.nb - 1:
                cur = cur @ s.w[j]
        cur = s.p[i]
        for j in range(i - 1, -1, -1):
            a[off[i]:off[i + 1], off[j]:off[j + 1]] = cur @ s.q[j].T
            if j > 0:
                cur = cur @ s.r[j]
    return a


def sss_matvec(s: SSSForm, x) -> np.ndarray:
    """A @ x by one backward sweep (g), one forward sweep (h), and a combine."""
    x = as_vector(x)
    if x.size != s.n:
        raise DimensionMismatch("vector length mismatch")
    off = s.offsets()
    nb = s.nb
    xs = [x[off[i]:off[i + 1]] for i in range(nb)]
    g = [None] * (nb + 1)
    g[nb] = np.zeros(0)
    for i in range(nb - 1, -1, -1):
        g[i] = s.v[i].T @ xs[i] + s.w[i] @ g[i + 1]
        counting.add(s.v[i].size + s.w[i].size)
    h = [None] * nb
    prev = np.zeros(0)
    b = np.zeros(s.n)
    for i in range(nb):
        b[off[i]:off[i + 1]] = s.d[i] @ xs[i] + s.u[i] @ g[i + 1] + s.p[i] @ prev
        counting.add(s.d[i].size + s.u[i].size + s.p[i].size)
        h[i] = s.q[i].T @ xs[i] + s.r[i] @ prev
        counting.add(s.q[i].size + s.r[i].size)
        prev = h[i]
    return b


# ---------------------------------------------------------------------------
# recompression

def _recompress_upper_chain(u, w, v, tol):
    """Two-pass rank truncation of one chain.

    Forward pass orthonormalizes the stacked column bases (QR); backward pass
    truncates the row factors by SVD.  Linear in the matrix size for fixed
    chain width.
    """
    nb = len(u)
    uhat = [None] * nb
    what = [None] * nb
    vhat = [None] * nb
    gprev = np.zeros((0, 0))
    for i in range(nb):
        vhat[i] = v[i] @ gprev.T
        m = np.vstack([gprev @ w[i], u[i]])
        qf, g = np.linalg.qr(m)
        counting.add(m.shape[0] * m.shape[1] ** 2)
        what[i] = qf[: gprev.shape[0]]
        uhat[i] = qf[gprev.shape[0]:]
        gprev = g
    new_u = [None] * nb
    new_w = [None] * nb
    new_v = [None] * nb
    # s_at[j] carries the left factor X*Sigma of the truncation at block j;
    # it gets absorbed into U_{j-1} and into the next C going left.
    s_at = [None] * (nb + 1)
    s_at[nb] = np.zeros((uhat[nb - 1].shape[1] if nb else 0, 0))
    for j in range(nb - 1, 0, -1):
        c = np.hstack([vhat[j].T, what[j] @ s_at[j + 1]])
        if c.size == 0 or min(c.shape) == 0:
            rank = 0
            x = np.zeros((c.shape[0], 0))
            yt = np.zeros((0, c.shape[1]))
        else:
            uu, sing, vt = np.linalg.svd(c, full_matrices=False)
            counting.add(c.shape[0] * c.shape[1] * min(c.shape))
            rank = int(np.count_nonzero(sing > tol * sing[0])) if sing[0] > 0 else 0
            x = uu[:, :rank] * sing[:rank]
            yt = vt[:rank]
        nj = v[j].shape[0]
        new_v[j] = yt[:, :nj].T.copy()
        new_w[j] = yt[:, nj:]
        s_at[j] = x
    for i in range(nb):
        new_u[i] = uhat[i] @ s_at[i + 1]
    if nb:
        new_v[0] = np.zeros((v[0].shape[0], 0))
        new_w[0] = np.zeros((0, new_u[0].shape[1]))
    return new_u, new_w, new_v


def sss_recompress(s: SSSForm, tol: float = DEFAULT_RECOMPRESS_TOL) -> SSSForm:
    u, w, v = _recompress_upper_chain(s.u, s.w, s.v, tol)
    uq, wr, vp = _recompress_upper_chain(s.q, [m.T for m in s.r], s.p, tol)
    return SSSForm(s.block_sizes, [m.copy() for m in s.d], u, w, v,
                   vp, [m.T.copy() for m in wr], uq)


# ---------------------------------------------------------------------------
# algebra

def _require_same_partition(s1: SSSForm, s2: SSSForm):
    if s1.block_sizes != s2.block_sizes:
        raise DimensionMismatch("block partitions must be identical")


def sss_add(s1: SSSForm, s2: SSSForm, tol: float = DEFAULT_RECOMPRESS_TOL) -> SSSForm:
    _require_same_partition(s1, s2)
    nb = s1.nb

    def blkdiag(a, b):
        out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
        out[: a.shape[0], : a.shape[1]] = a
        out[a.shape[0]:, a.shape[1]:] = b
        return out

    d = [s1.d[i] + s2.d[i] for i in range(nb)]
    u = [np.hstack([s1.u[i], s2.u[i]]) for i in range(nb)]
    v = [np.hstack([s1.v[i], s2.v[i]]) for i in range(nb)]
    w = [blkdiag(s1.w[i], s2.w[i]) for i in range(nb)]
    p = [np.hstack([s1.p[i], s2.p[i]]) for i in range(nb)]
    q = [np.hstack([s1.q[i], s2.q[i]]) for i in range(nb)]
    r = [blkdiag(s1.r[i], s2.r[i]) for i in range(nb)]
    out = SSSForm(s1.block_sizes, d, u, w, v, p, r, q)
    return sss_recompress(out, tol)


def _mul_upper(sa: SSSForm, sb: SSSForm):
    """Upper chain and diagonal of the product sa @ sb (single sweeps)."""
    nb = sa.nb
    rla = sa.lower_ranks
    rub = sb.upper_ranks
    # forward cross-accumulator: M_i sums lower(A) against upper(B) below row i
    m = [None] * (nb + 1)
    m[0] = np.zeros((0, 0))
    for i in range(nb):
        m[i + 1] = sa.r[i] @ m[i] @ sb.w[i] + sa.q[i].T @ sb.u[i]
        counting.add(sa.q[i].size * max(1, sb.u[i].shape[1]))
    # backward cross-accumulator: Ntil_i sums upper(A) against lower(B) above
    ntil = [None] * nb
    ntil[nb - 1] = np.zeros((sa.u[nb - 1].shape[1], 0))
    for j in range(nb - 2, -1, -1):
        ntil[j] = sa.v[j + 1].T @ sb.p[j + 1] + sa.w[j + 1] @ ntil[j + 1] @ sb.r[j + 1]
        counting.add(sa.v[j + 1].size * max(1, sb.p[j + 1].shape[1]))
    d = [None] * nb
    u = [None] * nb
    w = [None] * nb
    v = [None] * nb
    for i in range(nb):
        d[i] = sa.d[i] @ sb.d[i] + sa.p[i] @ (m[i] @ sb.v[i].T) \
            + sa.u[i] @ (ntil[i] @ sb.q[i].T)
        counting.add(sa.d[i].size * sb.d[i].shape[1])
        u[i] = np.hstack([sa.u[i], sa.d[i] @ sb.u[i] + sa.p[i] @ (m[i] @ sb.w[i])])
        v[i] = np.hstack([sb.d[i].T @ sa.v[i] + sb.q[i] @ (sa.w[i] @ ntil[i]).T, sb.v[i]])
        top = np.hstack([sa.w[i], sa.v[i].T @ sb.u[i]])
        bot = np.hstack([np.zeros((sb.w[i].shape[0], sa.w[i].shape[1])), sb.w[i]])
        w[i] = np.vstack([top, bot])
    # boundary widths: the last block's upper width must be zero
    u[nb - 1] = np.zeros((sa.block_sizes[-1], 0))
    w[nb - 1] = w[nb - 1][:, :0]
    return d, u, w, v


def sss_multiply(s1: SSSForm, s2: SSSForm, tol: float = DEFAULT_RECOMPRESS_TOL) -> SSSForm:
    """SSS representation of s1 @ s2 via single forward/backward sweeps."""
    _require_same_partition(s1, s2)
    d, u, w, v = _mul_upper(s1, s2)
    # lower chain of the product == transpose of the upper chain of s2^T s1^T
    _, ut, wt, vt = _mul_upper(sss_transpose(s2), sss_transpose(s1))
    p = vt
    r = [mm.T.copy() for mm in wt]
    q = ut
    out = SSSForm(s1.block_sizes, d, u, w, v, p, r, q)
    return sss_recompress(out, tol)


# ---------------------------------------------------------------------------
# LU, triangular inversion, inversion

def sss_lu(s: SSSForm, pivot_tol: float = 1e-12):
    """Unpivoted block LU with the same chain widths as the input.

    L keeps the input's lower transitions (P, R) with new Q's; U keeps the
    input's upper transitions (W, V) with new U's.
    """
    nb = s.nb
    l_diag = [None] * nb
    u_diag = [None] * nb
    new_uu = [None] * nb
    new_q = [None] * nb
    f = np.zeros((0, 0))
    for i in range(nb):
        schur_d = s.d[i] - s.p[i] @ (f @ s.v[i].T)
        try:
            lii, uii = dense_lu_no_pivot(schur_d, pivot_tol)
        except PivotBreakdown as e:
            raise PivotBreakdown(i, e.pivot, f"pivot breakdown in diagonal block {i}") from None
        l_diag[i] = lii
        u_diag[i] = uii
        rhs_u = s.u[i] - s.p[i] @ (f @ s.w[i])
        new_uu[i] = np.linalg.solve(lii, rhs_u) if rhs_u.size else np.zeros_like(rhs_u)
        rhs_q = s.q[i].T - s.r[i] @ (f @ s.v[i].T)
        yt = np.linalg.solve(uii.T, rhs_q.T).T if rhs_q.size else rhs_q
        new_q[i] = yt.T
        f = s.r[i] @ f @ s.w[i] + yt @ new_uu[i]
        counting.add(s.block_sizes[i] ** 3 + s.block_sizes[i] * (f.size + 1))
    zu, zw, zv = _zero_chain(s.block_sizes)
    lform = SSSForm(s.block_sizes, l_diag, zu, zw, zv,
                    [m.copy() for m in s.p], [m.copy() for m in s.r], new_q)
    zu2, zw2, zv2 = _zero_chain(s.block_sizes)
    uform = SSSForm(s.block_sizes, u_diag, new_uu, [m.copy() for m in s.w],
                    [m.copy() for m in s.v], zu2, [m.T for m in zw2], zv2)
    return lform, uform


def _is_lower_triangular(s: SSSForm) -> bool:
    return all(m.shape[1] == 0 for m in s.u) and \
        all(np.allclose(m, np.tril(m)) for m in s.d)


def _is_upper_triangular(s: SSSForm) -> bool:
    return all(m.shape[1] == 0 for m in s.p) and \
        all(np.allclose(m, np.triu(m)) for m in s.d)


def sss_invert_triangular(t: SSSForm, lower: bool) -> SSSForm:
    """Inverse of a triangular SSS matrix via the diagonal representation
    and the Woodbury formula; chain widths are preserved exactly."""
    if lower and not _is_lower_triangular(t):
        raise DimensionMismatch("input is not lower triangular")
    if not lower and not _is_upper_triangular(t):
        raise DimensionMismatch("input is not upper triangular")
    nb = t.nb
    dinv = []
    for i, di in enumerate(t.d):
        diag = np.abs(np.diag(di))
        if di.size and diag.min() < 1e-14 * max(diag.max(), 1.0):
            raise PivotBreakdown(i, diag.min(), f"singular diagonal block {i}")
        dinv.append(np.linalg.inv(di))
        counting.add(di.size * di.shape[0])
    if lower:
        new_p = [-dinv[i] @ t.p[i] for i in range(nb)]
        new_r = [t.r[i] - t.q[i].T @ (dinv[i] @ t.p[i]) for i in range(nb)]
        new_q = [dinv[i].T @ t.q[i] for i in range(nb)]
        zu, zw, zv = _zero_chain(t.block_sizes)
        return SSSForm(t.block_sizes, dinv, zu, zw, zv, new_p, new_r, new_q)
    new_u = [-dinv[i] @ t.u[i] for i in range(nb)]
    new_w = [t.w[i] - t.v[i].T @ (dinv[i] @ t.u[i]) for i in range(nb)]
    new_v = [dinv[i].T @ t.v[i] for i in range(nb)]
    zp, zr, zq = _zero_chain(t.block_sizes)
    return SSSForm(t.block_sizes, dinv, new_u, new_w, new_v,
                   zp, [m.T for m in zr], zq)


def sss_invert(s: SSSForm, pivot_tol: float = 1e-12,
               tol: float = DEFAULT_RECOMPRESS_TOL) -> SSSForm:
    """A^{-1} = U^{-1} L^{-1} through the linear-time pipeline."""
    lform, uform = sss_lu(s, pivot_tol)
    linv = sss_invert_triangular(lform, lower=True)
    uinv = sss_invert_triangular(uform, lower=False)
    return sss_multiply(uinv, linv, tol)


# ---------------------------------------------------------------------------
# the sparse embedding and its solver

def sss_embedding(s: SSSForm):
    """Assemble the sparse embedding over the interleaved unknowns
    (g_i, h_i, x_i); returns (matrix, per-block slices of the x unknowns).

    The embedding is block tridiagonal in the block index, which is exactly
    the no-fill-in profile the solver relies on.
    """
    nb = s.nb
    ru = s.upper_ranks
    rl = s.lower_ranks
    gw = [s.v[i].shape[1] for i in range(nb)]          # width of g_i (= ru[i-1])
    hw = [s.q[i].shape[1] for i in range(nb)]          # width of h_i (= rl[i+1])
    sizes = [gw[i] + hw[i] + s.block_sizes[i] for i in range(nb)]
    off = np.cumsum([0] + sizes)
    total = off[-1]
    big = np.zeros((total, total))
    xslices = []
    for i in range(nb):
        o = off[i]
        gsl = slice(o, o + gw[i])
        hsl = slice(o + gw[i], o + gw[i] + hw[i])
        xsl = slice(o + gw[i] + hw[i], off[i + 1])
        xslices.append(xsl)
        big[gsl, gsl] = np.eye(gw[i])
        big[gsl, xsl] = -s.v[i].T
        big[hsl, hsl] = np.eye(hw[i])
        big[hsl, xsl] = -s.q[i].T
        big[xsl, xsl] = s.d[i]
        if i + 1 < nb:
            on = off[i + 1]
            gn = slice(on, on + gw[i + 1])
            big[gsl, gn] = -s.w[i]
            big[xsl, gn] = s.u[i]
        if i > 0:
            op_ = off[i - 1]
            hp = slice(op_ + gw[i - 1], op_ + gw[i - 1] + hw[i - 1])
            big[hsl, hp] = -s.r[i]
            big[xsl, hp] = s.p[i]
    return big, xslices, (gw, hw)


def sss_diagonal_representation(s: SSSForm) -> np.ndarray:
    """Evaluate D + U Z^T (I - W Z^T)^{-1} V^T + P Z (I - R Z)^{-1} Q^T densely.

    Test-only: eliminating g and h from the embedding must reproduce the
    matrix itself (the Schur-complement claim, taken literally).
    """
    big, xslices, (gw, hw) = sss_embedding(s)
    n = s.n
    total = big.shape[0]
    xmask = np.zeros(total, dtype=bool)
    for sl in xslices:
        xmask[sl] = True
    a11 = big[np.ix_(~xmask, ~xmask)]
    a12 = big[np.ix_(~xmask, xmask)]
    a21 = big[np.ix_(xmask, ~xmask)]
    a22 = big[np.ix_(xmask, xmask)]
    return a22 - a21 @ np.linalg.solve(a11, a12)


def sss_solve(s: SSSForm, b, pivot_tol: float = 1e-12) -> np.ndarray:
    """Solve A x = b by unpivoted block-tridiagonal elimination of the
    sparse embedding in the interleaved (g_i, h_i, x_i) order.

    Fill-in stays inside the tridiagonal block profile by construction; the
    elimination below only ever touches the diagonal, sub- and super-blocks.
    """
    b = as_vector(b)
    if b.size != s.n:
        raise DimensionMismatch("right-hand side length mismatch")
    nb = s.nb
    off = s.offsets()
    gw = [s.v[i].shape[1] for i in range(nb)]
    hw = [s.q[i].shape[1] for i in range(nb)]
    sizes = [gw[i] + hw[i] + s.block_sizes[i] for i in range(nb)]

    def diag_block(i):
        m = np.zeros((sizes[i], sizes[i]))
        g, h, x = gw[i], hw[i], s.block_sizes[i]
        m[:g, :g] = np.eye(g)
        m[:g, g + h:] = -s.v[i].T
        m[g:g + h, g:g + h] = np.eye(h)
        m[g:g + h, g + h:] = -s.q[i].T
        m[g + h:, g + h:] = s.d[i]
        return m

    def super_block(i):  # rows of block i, cols of block i+1
        m = np.zeros((sizes[i], sizes[i + 1]))
        g, h = gw[i], hw[i]
        gn = gw[i + 1]
        m[:g, :gn] = -s.w[i]
        m[g + h:, :gn] = s.u[i]
        return m

    def sub_block(i):  # rows of block i, cols of block i-1
        m = np.zeros((sizes[i], sizes[i - 1]))
        g, h = gw[i], hw[i]
        gp, hp = gw[i - 1], hw[i - 1]
        m[g:g + h, gp:gp + hp] = -s.r[i]
        m[g + h:, gp:gp + hp] = s.p[i]
        return m

    rhs = [np.concatenate([np.zeros(gw[i] + hw[i]), b[off[i]:off[i + 1]]])
           for i in range(nb)]
    # forward elimination
    diag = diag_block(0)
    factors = []
    for i in range(nb):
        try:
            lii, uii = dense_lu_no_pivot(diag, pivot_tol)
        except PivotBreakdown as e:
            raise PivotBreakdown(i, e.pivot,
                                 f"pivot breakdown eliminating embedding block {i}") from None
        if i + 1 < nb:
            e_blk = super_block(i)
            c_blk = sub_block(i + 1)
            sinv_e = np.linalg.solve(uii, np.linalg.solve(lii, e_blk))
            factors.append((lii, uii, sinv_e, rhs[i]))
            rhs[i + 1] = rhs[i + 1] - c_blk @ np.linalg.solve(
                uii, np.linalg.solve(lii, rhs[i]))
            diag = diag_block(i + 1) - c_blk @ sinv_e
            counting.add(sizes[i] ** 3 + sizes[i] ** 2 * sizes[i + 1])
        else:
            factors.append((lii, uii, None, rhs[i]))
            counting.add(sizes[i] ** 3)
    # back substitution
    sol = [None] * nb
    lii, uii, _, rr = factors[nb - 1]
    sol[nb - 1] = np.linalg.solve(uii, np.linalg.solve(lii, rr))
    for i in range(nb - 2, -1, -1):
        lii, uii, sinv_e, rr = factors[i]
        sol[i] = np.linalg.solve(uii, np.linalg.solve(lii, rr)) - sinv_e @ sol[i + 1]
    x = np.zeros(s.n)
    for i in range(nb):
        x[off[i]:off[i + 1]] = sol[i][gw[i] + hw[i]:]
    return x
