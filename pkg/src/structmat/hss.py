"""Hierarchically semi-separable representations on a perfect binary tree.

Nodes are addressed (k, i): level k (0 = root, K = leaves), index i within
the level.  Leaf i carries D_i, U_i, V_i; every non-root node carries the
translation operators R_{k;i} (p_{k;i} x p_{k-1;i//2}) and W_{k;i}
(q_{k;i} x q_{k-1;i//2}) plus the sibling coupling B_{k;i} standing for the
block B_{(k,i),(k,i^1)} of shape p_{k;i} x q_{k;i^1}.  The root has width
zero on both sides.

The column basis of the off-diagonal row block of node (k, i) nests as

    U_{k;i} = [ U_{k+1;2i}   R_{k+1;2i}
                U_{k+1;2i+1} R_{k+1;2i+1} ]

and likewise for V with W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import counting
from .errors import DimensionMismatch, PivotBreakdown
from .kernel import as_matrix, as_vector, dense_lu_no_pivot
from .sss import DEFAULT_RECOMPRESS_TOL, _svd_truncate


@dataclass(eq=False)
class PartitionTree:
    """Perfect binary partition tree; sizes[k][i] is the span of node (k, i)."""

    sizes: list

    def __post_init__(self):
        for k in range(len(self.sizes) - 1):
            for i, s in enumerate(self.sizes[k]):
                if s != self.sizes[k + 1][2 * i] + self.sizes[k + 1][2 * i + 1]:
                    raise DimensionMismatch("tree level sizes do not nest")
        if any(s <= 0 for level in self.sizes for s in level):
            raise DimensionMismatch("tree block sizes must be positive")

    @property
    def depth(self) -> int:
        return len(self.sizes) - 1

    @property
    def n(self) -> int:
        return sum(self.sizes[-1])

    @property
    def leaf_sizes(self):
        return tuple(self.sizes[-1])

    def offsets(self, k: int):
        return np.cumsum([0] + list(self.sizes[k]))

    def node_range(self, k: int, i: int):
        off = self.offsets(k)
        return off[i], off[i + 1]


def build_tree(n: int, leaf_size: int) -> PartitionTree:
    """Split [0, n) in near-halves until every piece is at most leaf_size."""
    if n < 1 or leaf_size < 1:
        raise DimensionMismatch("n and leaf_size must be positive")
    levels = [[n]]
    while max(levels[-1]) > leaf_size:
        if min(levels[-1]) == 1:
            break
        nxt = []
        for s in levels[-1]:
            if s == 1:
                raise DimensionMismatch("leaf_size forces splitting a singleton")
            nxt.extend([(s + 1) // 2, s // 2])
        levels.append(nxt)
    return PartitionTree(levels)


@dataclass(eq=False)
class HSSForm:
    tree: PartitionTree
    d: list            # leaf diagonal blocks
    u: list            # leaf row bases
    v: list            # leaf column bases
    r: dict            # (k, i) -> R_{k;i}, 1 <= k <= K
    w: dict            # (k, i) -> W_{k;i}
    b: dict            # (k, i) -> B_{(k,i),(k,i^1)}

    def __post_init__(self):
        K = self.tree.depth
        leaves = self.tree.leaf_sizes
        if len(self.d) != len(leaves) or len(self.u) != len(leaves) or len(self.v) != len(leaves):
            raise DimensionMismatch("leaf data must match the tree's leaf count")
        for i, ni in enumerate(leaves):
            if self.d[i].shape != (ni, ni):
                raise DimensionMismatch(f"leaf D[{i}] must be {ni}x{ni}")
            if self.u[i].shape[0] != ni or self.v[i].shape[0] != ni:
                raise DimensionMismatch(f"leaf bases of node {i} must have {ni} rows")
        pw = self.row_widths()
        qw = self.col_widths()
        if K and (pw[(0, 0)] != 0 or qw[(0, 0)] != 0):
            raise DimensionMismatch("root widths must be zero")
        for k in range(1, K + 1):
            for i in range(2 ** k):
                if self.r[(k, i)].shape != (pw[(k, i)], pw[(k - 1, i // 2)]):
                    raise DimensionMismatch(f"R{(k, i)} shape mismatch")
                if self.w[(k, i)].shape != (qw[(k, i)], qw[(k - 1, i // 2)]):
                    raise DimensionMismatch(f"W{(k, i)} shape mismatch")
                if self.b[(k, i)].shape != (pw[(k, i)], qw[(k, i ^ 1)]):
                    raise DimensionMismatch(f"B{(k, i)} shape mismatch")

    @property
    def n(self) -> int:
        return self.tree.n

    def row_widths(self) -> dict:
        K = self.tree.depth
        pw = {(K, i): m.shape[1] for i, m in enumerate(self.u)}
        for k in range(K - 1, -1, -1):
            for i in range(2 ** k):
                pw[(k, i)] = self.r[(k + 1, 2 * i)].shape[1]
        return pw

    def col_widths(self) -> dict:
        K = self.tree.depth
        qw = {(K, i): m.shape[1] for i, m in enumerate(self.v)}
        for k in range(K - 1, -1, -1):
            for i in range(2 ** k):
                qw[(k, i)] = self.w[(k + 1, 2 * i)].shape[1]
        return qw

    def max_rank(self) -> int:
        widths = [m.shape[1] for m in self.u] + [m.shape[1] for m in self.v]
        widths += [m.shape[0] for m in self.b.values()]
        return max(widths) if widths else 0


# ---------------------------------------------------------------------------
# construction

def hss_construct(a, tree: PartitionTree, tol: float = 1e-10) -> HSSForm:
    """Build an HSS representation bottom-up on a working compressed matrix.

    Each level first compresses every node's off-diagonal row block (giving
    U at the leaves, R splits above), then every node's off-diagonal column
    block (V / W), then reads the sibling couplings B straight out of the
    doubly compressed matrix.  All bases are orthonormal, so each Hankel
    block is truncated at its own relative tolerance exactly once.
    """
    a = as_matrix(a)
    K = tree.depth
    if a.shape != (tree.n, tree.n):
        raise DimensionMismatch("matrix size must match the tree")
    leaves = tree.leaf_sizes
    nleaf = len(leaves)
    loff = tree.offsets(K)
    d = [a[loff[i]:loff[i + 1], loff[i]:loff[i + 1]].copy() for i in range(nleaf)]
    u = [None] * nleaf
    v = [None] * nleaf
    r: dict = {}
    w: dict = {}
    b: dict = {}
    if K == 0:
        return HSSForm(tree, d, [np.zeros((leaves[0], 0))], [np.zeros((leaves[0], 0))],
                       r, w, b)
    m = a.copy()
    row_h = list(leaves)       # current compressed row heights per node
    col_w = list(leaves)       # current compressed column widths per node
    child_row_h = None         # heights of the two children inside each group
    child_col_w = None
    for k in range(K, 0, -1):
        nodes = 2 ** k
        roff = np.cumsum([0] + row_h)
        coff = np.cumsum([0] + col_w)
        new_rows = []
        new_row_h = []
        for i in range(nodes):
            rows = m[roff[i]:roff[i + 1], :]
            mask = np.ones(m.shape[1], dtype=bool)
            mask[coff[i]:coff[i + 1]] = False
            basis, _ = _svd_truncate(rows[:, mask], tol)
            if k == K:
                u[i] = basis
            else:
                h0 = child_row_h[2 * i]
                r[(k + 1, 2 * i)] = basis[:h0]
                r[(k + 1, 2 * i + 1)] = basis[h0:]
            new_rows.append(basis.T @ rows)
            new_row_h.append(basis.shape[1])
        m = np.vstack(new_rows)
        row_h = new_row_h
        roff = np.cumsum([0] + row_h)
        new_cols = []
        new_col_w = []
        for i in range(nodes):
            cols = m[:, coff[i]:coff[i + 1]]
            mask = np.ones(m.shape[0], dtype=bool)
            mask[roff[i]:roff[i + 1]] = False
            basis, _ = _svd_truncate(cols[mask].T, tol)
            if k == K:
                v[i] = basis
            else:
                w0 = child_col_w[2 * i]
                w[(k + 1, 2 * i)] = basis[:w0]
                w[(k + 1, 2 * i + 1)] = basis[w0:]
            new_cols.append(cols @ basis)
            new_col_w.append(basis.shape[1])
        m = np.hstack(new_cols)
        col_w = new_col_w
        coff = np.cumsum([0] + col_w)
        for i in range(0, nodes, 2):
            b[(k, i)] = m[roff[i]:roff[i + 1], coff[i + 1]:coff[i + 2]].copy()
            b[(k, i + 1)] = m[roff[i + 1]:roff[i + 2], coff[i]:coff[i + 1]].copy()
        child_row_h = row_h
        child_col_w = col_w
        row_h = [row_h[2 * i] + row_h[2 * i + 1] for i in range(nodes // 2)]
        col_w = [col_w[2 * i] + col_w[2 * i + 1] for i in range(nodes // 2)]
    # root-level translations: widths zero by definition
    for i in range(2):
        r[(1, i)] = np.zeros((child_row_h[i], 0))
        w[(1, i)] = np.zeros((child_col_w[i], 0))
    return HSSForm(tree, d, u, v, r, w, b)


# ---------------------------------------------------------------------------
# dense bridge, matvec

def _materialize_bases(h: HSSForm):
    K = h.tree.depth
    um = {(K, i): h.u[i] for i in range(len(h.u))}
    vm = {(K, i): h.v[i] for i in range(len(h.v))}
    for k in range(K - 1, 0, -1):
        for i in range(2 ** k):
            c0, c1 = (k + 1, 2 * i), (k + 1, 2 * i + 1)
            um[(k, i)] = np.vstack([um[c0] @ h.r[c0], um[c1] @ h.r[c1]])
            vm[(k, i)] = np.vstack([vm[c0] @ h.w[c0], vm[c1] @ h.w[c1]])
    return um, vm


def hss_to_dense(h: HSSForm) -> np.ndarray:
    n = h.n
    K = h.tree.depth
    out = np.zeros((n, n))
    loff = h.tree.offsets(K)
    for i, di in enumerate(h.d):
        out[loff[i]:loff[i + 1], loff[i]:loff[i + 1]] = di
    if K == 0:
        return out
    um, vm = _materialize_bases(h)
    for k in range(1, K + 1):
        off = h.tree.offsets(k)
        for i in range(0, 2 ** k, 2):
            r0 = slice(off[i], off[i + 1])
            r1 = slice(off[i + 1], off[i + 2])
            out[r0, r1] = um[(k, i)] @ h.b[(k, i)] @ vm[(k, i + 1)].T
            out[r1, r0] = um[(k, i + 1)] @ h.b[(k, i + 1)] @ vm[(k, i)].T
    return out


def hss_matvec(h: HSSForm, x) -> np.ndarray:
    """A @ x via one upward sweep (g) and one downward sweep (f)."""
    x = as_vector(x)
    if x.size != h.n:
        raise DimensionMismatch("vector length mismatch")
    K = h.tree.depth
    loff = h.tree.offsets(K)
    xs = [x[loff[i]:loff[i + 1]] for i in range(len(h.d))]
    g = {}
    for i in range(len(h.d)):
        g[(K, i)] = h.v[i].T @ xs[i]
        counting.add(h.v[i].size)
    for k in range(K - 1, -1, -1):
        for i in range(2 ** k):
            c0, c1 = (k + 1, 2 * i), (k + 1, 2 * i + 1)
            g[(k, i)] = h.w[c0].T @ g[c0] + h.w[c1].T @ g[c1]
            counting.add(h.w[c0].size + h.w[c1].size)
    f = {(0, 0): np.zeros(0)}
    for k in range(1, K + 1):
        for i in range(2 ** k):
            f[(k, i)] = h.b[(k, i)] @ g[(k, i ^ 1)] + h.r[(k, i)] @ f[(k - 1, i // 2)]
            counting.add(h.b[(k, i)].size + h.r[(k, i)].size)
    y = np.zeros(h.n)
    for i in range(len(h.d)):
        y[loff[i]:loff[i + 1]] = h.d[i] @ xs[i] + h.u[i] @ f[(K, i)]
        counting.add(h.d[i].size + h.u[i].size)
    return y


# ---------------------------------------------------------------------------
# recompression

def hss_recompress(h: HSSForm, tol: float = DEFAULT_RECOMPRESS_TOL) -> HSSForm:
    """Rank truncation: orthonormalize both bases bottom-up, then truncate
    top-down against the couplings actually carried through each node."""
    K = h.tree.depth
    if K == 0:
        return HSSForm(h.tree, [m.copy() for m in h.d],
                       [m.copy() for m in h.u], [m.copy() for m in h.v], {}, {}, {})
    nleaf = 2 ** K
    # pass 1: QR both bases, push the triangular factors up the tree
    uhat = [None] * nleaf
    vhat = [None] * nleaf
    rhat = {}
    what = {}
    gam = {}
    the = {}
    for i in range(nleaf):
        uhat[i], gam[(K, i)] = np.linalg.qr(h.u[i])
        vhat[i], the[(K, i)] = np.linalg.qr(h.v[i])
        counting.add(h.u[i].size * h.u[i].shape[1] + h.v[i].size * h.v[i].shape[1])
    for k in range(K - 1, -1, -1):
        for i in range(2 ** k):
            c0, c1 = (k + 1, 2 * i), (k + 1, 2 * i + 1)
            stack = np.vstack([gam[c0] @ h.r[c0], gam[c1] @ h.r[c1]])
            qq, gam[(k, i)] = np.linalg.qr(stack)
            rhat[c0] = qq[: gam[c0].shape[0]]
            rhat[c1] = qq[gam[c0].shape[0]:]
            stack = np.vstack([the[c0] @ h.w[c0], the[c1] @ h.w[c1]])
            qq, the[(k, i)] = np.linalg.qr(stack)
            what[c0] = qq[: the[c0].shape[0]]
            what[c1] = qq[the[c0].shape[0]:]
    bhat = {key: gam[key] @ h.b[key] @ the[(key[0], key[1] ^ 1)].T for key in h.b}
    # pass 2: top-down truncation.  trow/tcol carry everything a node's basis
    # must still represent (its own coupling plus whatever the parent kept).
    x = {(0, 0): np.eye(0)}
    y = {(0, 0): np.eye(0)}
    trow = {(0, 0): np.zeros((0, 0))}
    tcol = {(0, 0): np.zeros((0, 0))}
    for k in range(1, K + 1):
        for i in range(2 ** k):
            par = (k - 1, i // 2)
            mrow = np.hstack([bhat[(k, i)], rhat[(k, i)] @ trow[par]])
            x[(k, i)], trow[(k, i)] = _svd_truncate(mrow, tol)
            sib = (k, i ^ 1)
            mcol = np.hstack([bhat[sib].T, what[(k, i)] @ tcol[par]])
            y[(k, i)], tcol[(k, i)] = _svd_truncate(mcol, tol)
    new_u = [uhat[i] @ x[(K, i)] for i in range(nleaf)]
    new_v = [vhat[i] @ y[(K, i)] for i in range(nleaf)]
    new_r = {}
    new_w = {}
    new_b = {}
    for k in range(1, K + 1):
        for i in range(2 ** k):
            par = (k - 1, i // 2)
            new_r[(k, i)] = x[(k, i)].T @ rhat[(k, i)] @ x[par]
            new_w[(k, i)] = y[(k, i)].T @ what[(k, i)] @ y[par]
            new_b[(k, i)] = x[(k, i)].T @ bhat[(k, i)] @ y[(k, i ^ 1)]
    return HSSForm(h.tree, [m.copy() for m in h.d], new_u, new_v, new_r, new_w, new_b)


# ---------------------------------------------------------------------------
# algebra

def _require_same_tree(h1: HSSForm, h2: HSSForm):
    if [list(level) for level in h1.tree.sizes] != [list(level) for level in h2.tree.sizes]:
        raise DimensionMismatch("partition trees must be identical")


def hss_add(h1: HSSForm, h2: HSSForm, tol: float = DEFAULT_RECOMPRESS_TOL) -> HSSForm:
    _require_same_tree(h1, h2)

    def blkdiag(a, b):
        out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
        out[: a.shape[0], : a.shape[1]] = a
        out[a.shape[0]:, a.shape[1]:] = b
        return out

    d = [h1.d[i] + h2.d[i] for i in range(len(h1.d))]
    u = [np.hstack([h1.u[i], h2.u[i]]) for i in range(len(h1.u))]
    v = [np.hstack([h1.v[i], h2.v[i]]) for i in range(len(h1.v))]
    r = {key: blkdiag(h1.r[key], h2.r[key]) for key in h1.r}
    w = {key: blkdiag(h1.w[key], h2.w[key]) for key in h1.w}
    b = {key: blkdiag(h1.b[key], h2.b[key]) for key in h1.b}
    return hss_recompress(HSSForm(h1.tree, d, u, v, r, w, b), tol)


def hss_multiply(h1: HSSForm, h2: HSSForm, tol: float = DEFAULT_RECOMPRESS_TOL) -> HSSForm:
    """HSS representation of h1 @ h2: one upward sweep collecting the basis
    cross-Gramians, one downward sweep distributing the couplings."""
    _require_same_tree(h1, h2)
    K = h1.tree.depth
    nleaf = len(h1.d)
    if K == 0:
        return HSSForm(h1.tree, [h1.d[0] @ h2.d[0]],
                       [np.zeros((h1.n, 0))], [np.zeros((h1.n, 0))], {}, {}, {})
    # upward: phi[t] = V1_t^T U2_t through the nested bases
    phi = {}
    for i in range(nleaf):
        phi[(K, i)] = h1.v[i].T @ h2.u[i]
        counting.add(h1.v[i].size * max(1, h2.u[i].shape[1]))
    for k in range(K - 1, 0, -1):
        for i in range(2 ** k):
            c0, c1 = (k + 1, 2 * i), (k + 1, 2 * i + 1)
            phi[(k, i)] = h1.w[c0].T @ phi[c0] @ h2.r[c0] + h1.w[c1].T @ phi[c1] @ h2.r[c1]
    # downward: psi[t] accumulates the part of the product that crosses t
    psi = {(0, 0): np.zeros((0, 0))}
    for k in range(1, K + 1):
        for i in range(2 ** k):
            par = (k - 1, i // 2)
            s = (k, i ^ 1)
            psi[(k, i)] = h1.r[(k, i)] @ psi[par] @ h2.w[(k, i)].T \
                + h1.b[(k, i)] @ phi[s] @ h2.b[s]
    d = [None] * nleaf
    u = [None] * nleaf
    v = [None] * nleaf
    for i in range(nleaf):
        d[i] = h1.d[i] @ h2.d[i] + h1.u[i] @ psi[(K, i)] @ h2.v[i].T
        counting.add(h1.d[i].size * h2.d[i].shape[1])
        u[i] = np.hstack([h1.u[i], h1.d[i] @ h2.u[i]])
        v[i] = np.hstack([h2.d[i].T @ h1.v[i], h2.v[i]])
    r = {}
    w = {}
    b = {}
    for k in range(1, K + 1):
        for i in range(2 ** k):
            par = (k - 1, i // 2)
            s = (k, i ^ 1)
            r1, r2 = h1.r[(k, i)], h2.r[(k, i)]
            w1, w2 = h1.w[(k, i)], h2.w[(k, i)]
            top = np.hstack([r1, h1.b[(k, i)] @ phi[s] @ h2.r[s]])
            bot = np.hstack([np.zeros((r2.shape[0], r1.shape[1])), r2])
            r[(k, i)] = np.vstack([top, bot])
            top = np.hstack([w1, np.zeros((w1.shape[0], w2.shape[1]))])
            bot = np.hstack([h2.b[s].T @ phi[s].T @ h1.w[s], w2])
            w[(k, i)] = np.vstack([top, bot])
            topb = np.hstack([h1.b[(k, i)], h1.r[(k, i)] @ psi[par] @ h2.w[s].T])
            botb = np.hstack([np.zeros((h2.b[(k, i)].shape[0], h1.b[(k, i)].shape[1])),
                              h2.b[(k, i)]])
            b[(k, i)] = np.vstack([topb, botb])
    return hss_recompress(HSSForm(h1.tree, d, u, v, r, w, b), tol)


# ---------------------------------------------------------------------------
# LU, triangular inversion, inversion

def hss_lu(h: HSSForm, pivot_tol: float = 1e-12):
    """Unpivoted recursive LU: A = L Uf with L unit-lower and Uf upper
    triangular, both HSS with the same tree and the input's chain widths.

    The recursion tracks, per subtree, a low-rank correction U G V^T coming
    from eliminations outside the subtree, and returns the Schur coupling
    rho = V^T (subtree)^{-1} U.
    """
    K = h.tree.depth
    pw = h.row_widths()
    qw = h.col_widths()
    ll = [None] * len(h.d)
    uu = [None] * len(h.d)
    xs = [None] * len(h.d)
    ys = [None] * len(h.d)
    rx = {}
    wy = {}
    b12 = {}
    b21 = {}

    def fac(k, i, g):
        if k == K:
            dt = h.d[i] + h.u[i] @ g @ h.v[i].T
            try:
                lii, uii = dense_lu_no_pivot(dt, pivot_tol)
            except PivotBreakdown as e:
                raise PivotBreakdown((k, i), e.pivot,
                                     f"pivot breakdown in leaf {(k, i)}") from None
            ll[i] = lii
            uu[i] = uii
            xs[i] = np.linalg.solve(lii, h.u[i])
            ys[i] = np.linalg.solve(uii.T, h.v[i])
            counting.add(dt.size * dt.shape[0])
            return ys[i].T @ xs[i]
        c0, c1 = (k + 1, 2 * i), (k + 1, 2 * i + 1)
        b12t = h.b[c0] + h.r[c0] @ g @ h.w[c1].T
        b21t = h.b[c1] + h.r[c1] @ g @ h.w[c0].T
        rho0 = fac(c0[0], c0[1], h.r[c0] @ g @ h.w[c0].T)
        g1 = h.r[c1] @ g @ h.w[c1].T - b21t @ rho0 @ b12t
        rho1 = fac(c1[0], c1[1], g1)
        b12[c0] = b12t
        b21[c1] = b21t
        rx[c0] = h.r[c0]
        rx[c1] = h.r[c1] - b21t @ rho0 @ h.r[c0]
        wy[c0] = h.w[c0]
        wy[c1] = h.w[c1] - b12t.T @ rho0.T @ h.w[c0]
        return wy[c0].T @ rho0 @ rx[c0] + wy[c1].T @ rho1 @ rx[c1]

    fac(0, 0, np.zeros((pw[(0, 0)], qw[(0, 0)])) if K else np.zeros((0, 0)))
    lb = {}
    ub = {}
    for k in range(1, K + 1):
        for i in range(0, 2 ** k, 2):
            c0, c1 = (k, i), (k, i + 1)
            lb[c0] = np.zeros((pw[c0], qw[c1]))
            lb[c1] = b21[c1]
            ub[c0] = b12[c0]
            ub[c1] = np.zeros((pw[c1], qw[c0]))
    lform = HSSForm(h.tree, ll, [m.copy() for m in h.u], ys,
                    {key: m.copy() for key, m in h.r.items()}, wy, lb)
    uform = HSSForm(h.tree, uu, xs, [m.copy() for m in h.v],
                    rx, {key: m.copy() for key, m in h.w.items()}, ub)
    return lform, uform


def _check_triangular(t: HSSForm, lower: bool):
    K = t.tree.depth
    for i, di in enumerate(t.d):
        ref = np.tril(di) if lower else np.triu(di)
        if not np.allclose(di, ref):
            raise DimensionMismatch(f"leaf {i} diagonal block is not triangular")
    for k in range(1, K + 1):
        for i in range(0, 2 ** k, 2):
            dead = t.b[(k, i)] if lower else t.b[(k, i + 1)]
            if dead.size and np.abs(dead).max() > 1e-12:
                raise DimensionMismatch("matrix is not structurally triangular")


def hss_invert_triangular(t: HSSForm, lower: bool) -> HSSForm:
    """Inverse of a triangular HSS matrix by one recursion over the tree.

    Uses that the inverse of a block triangular matrix keeps the profile,
    with off-diagonal couplings -B routed through the solved bases
    X = T^{-1} U and Y = T^{-T} V; kappa = V^T T^{-1} U propagates upward.
    """
    _check_triangular(t, lower)
    K = t.tree.depth
    dinv = []
    for i, di in enumerate(t.d):
        diag = np.abs(np.diag(di))
        if di.size and diag.min() < 1e-14 * max(diag.max(), 1.0):
            raise PivotBreakdown(i, diag.min(), f"singular diagonal block {i}")
        dinv.append(np.linalg.inv(di))
        counting.add(di.size * di.shape[0])
    new_u = [dinv[i] @ t.u[i] for i in range(len(t.d))]
    new_v = [dinv[i].T @ t.v[i] for i in range(len(t.d))]
    new_r = {}
    new_w = {}
    new_b = {}
    kappa = {}

    def rec(k, i):
        if k == K:
            kappa[(k, i)] = t.v[i].T @ new_u[i]
            return
        c0, c1 = (k + 1, 2 * i), (k + 1, 2 * i + 1)
        rec(*c0)
        rec(*c1)
        k0, k1 = kappa[c0], kappa[c1]
        if lower:
            b21 = t.b[c1]
            new_r[c0] = t.r[c0]
            new_r[c1] = t.r[c1] - b21 @ k0 @ t.r[c0]
            new_w[c1] = t.w[c1]
            new_w[c0] = t.w[c0] - b21.T @ k1.T @ t.w[c1]
            new_b[c1] = -b21
            new_b[c0] = np.zeros_like(t.b[c0])
            kappa[(k, i)] = t.w[c0].T @ k0 @ t.r[c0] + t.w[c1].T @ k1 @ new_r[c1]
        else:
            b12 = t.b[c0]
            new_r[c1] = t.r[c1]
            new_r[c0] = t.r[c0] - b12 @ k1 @ t.r[c1]
            new_w[c0] = t.w[c0]
            new_w[c1] = t.w[c1] - b12.T @ k0.T @ t.w[c0]
            new_b[c0] = -b12
            new_b[c1] = np.zeros_like(t.b[c1])
            kappa[(k, i)] = t.w[c0].T @ k0 @ new_r[c0] + t.w[c1].T @ k1 @ t.r[c1]

    rec(0, 0)
    return HSSForm(t.tree, dinv, new_u, new_v, new_r, new_w, new_b)


def hss_invert(h: HSSForm, pivot_tol: float = 1e-12,
               tol: float = DEFAULT_RECOMPRESS_TOL) -> HSSForm:
    lform, uform = hss_lu(h, pivot_tol)
    linv = hss_invert_triangular(lform, lower=True)
    uinv = hss_invert_triangular(uform, lower=False)
    return hss_multiply(uinv, linv, tol)


# ---------------------------------------------------------------------------
# the sparse tree embedding and its solver

def _node_vars(h: HSSForm):
    """Variable layout of the tree embedding: internal (g, f), leaf (g, f, x)."""
    K = h.tree.depth
    pw = h.row_widths()
    qw = h.col_widths()
    sizes = {}
    for k in range(1, K + 1):
        for i in range(2 ** k):
            extra = h.tree.sizes[K][i] if k == K else 0
            sizes[(k, i)] = qw[(k, i)] + pw[(k, i)] + extra
    return sizes, pw, qw


def hss_sparse_solve(h: HSSForm, rhs, pivot_tol: float = 1e-12) -> np.ndarray:
    """Solve A x = rhs through the sparse tree embedding.

    Unknowns per node t are (g_t, f_t) plus the leaf segments x; equations
    are the two sweeps of the matvec plus the leaf balance D x + U f = b.
    Elimination runs leaves to root; every fill block created lands on the
    parent or sibling of the eliminated node, which the code asserts.
    """
    rhs = as_vector(rhs)
    if rhs.size != h.n:
        raise DimensionMismatch("right-hand side length mismatch")
    K = h.tree.depth
    if K == 0:
        lii, uii = dense_lu_no_pivot(h.d[0], pivot_tol)
        return np.linalg.solve(uii, np.linalg.solve(lii, rhs))
    sizes, pw, qw = _node_vars(h)
    loff = h.tree.offsets(K)
    blocks: dict = {}
    vec = {}

    def parent(t):
        return (t[0] - 1, t[1] // 2)

    def sibling(t):
        return (t[0], t[1] ^ 1)

    for k in range(1, K + 1):
        for i in range(2 ** k):
            t = (k, i)
            q, p = qw[t], pw[t]
            m = np.zeros((sizes[t], sizes[t]))
            m[:q, :q] = np.eye(q)
            m[q:q + p, q:q + p] = np.eye(p)
            if k == K:
                ni = h.tree.sizes[K][i]
                m[:q, q + p:] = -h.v[i].T
                m[q + p:, q:q + p] = h.u[i]
                m[q + p:, q + p:] = h.d[i]
                vec[t] = np.concatenate([np.zeros(q + p), rhs[loff[i]:loff[i + 1]]])
            else:
                c0, c1 = (k + 1, 2 * i), (k + 1, 2 * i + 1)
                for c in (c0, c1):
                    cm = np.zeros((sizes[t], sizes[c]))
                    cm[:q, : qw[c]] = -h.w[c].T
                    blocks[(t, c)] = cm
                vec[t] = np.zeros(sizes[t])
            blocks[(t, t)] = m
            s = sibling(t)
            sm = np.zeros((sizes[t], sizes[s]))
            sm[q:q + p, : qw[s]] = -h.b[t]
            blocks[(t, s)] = blocks.get((t, s), np.zeros((sizes[t], sizes[s]))) + sm
            if k > 1:
                par = parent(t)
                pm = np.zeros((sizes[t], sizes[par]))
                pm[q:q + p, qw[par]: qw[par] + pw[par]] = -h.r[t]
                blocks[(t, par)] = blocks.get((t, par), np.zeros((sizes[t], sizes[par]))) + pm

    order = [(k, i) for k in range(K, 0, -1) for i in range(2 ** k)]
    eliminated = []
    active = set(order)
    for t in order:
        st = blocks.pop((t, t))
        try:
            lii, uii = dense_lu_no_pivot(st, pivot_tol)
        except PivotBreakdown as e:
            raise PivotBreakdown(t, e.pivot,
                                 f"pivot breakdown eliminating node {t}") from None
        row_ts = {key[1]: blocks.pop(key) for key in list(blocks)
                  if key[0] == t and key[1] in active and key[1] != t}
        col_ts = {key[0]: blocks.pop(key) for key in list(blocks)
                  if key[1] == t and key[0] in active and key[0] != t}
        allowed = {parent(t), sibling(t)}
        if col_ts and row_ts:
            stacked = np.hstack([row_ts[c] for c in row_ts])
            sinv_rows = np.linalg.solve(uii, np.linalg.solve(lii, stacked))
            widths = np.cumsum([0] + [row_ts[c].shape[1] for c in row_ts])
            sinv_parts = {c: sinv_rows[:, widths[j]:widths[j + 1]]
                          for j, c in enumerate(row_ts)}
            for rnode, rblk in col_ts.items():
                for cnode, spart in sinv_parts.items():
                    assert rnode in allowed and cnode in allowed, \
                        f"fill outside profile: {rnode} x {cnode}"
                    key = (rnode, cnode)
                    upd = rblk @ spart
                    counting.add(rblk.shape[0] * rblk.shape[1] * spart.shape[1])
                    if key in blocks:
                        blocks[key] = blocks[key] - upd
                    else:
                        blocks[key] = -upd
        svec = np.linalg.solve(uii, np.linalg.solve(lii, vec.pop(t)))
        for rnode, rblk in col_ts.items():
            vec[rnode] = vec[rnode] - rblk @ svec
        counting.add(st.shape[0] ** 3)
        eliminated.append((t, lii, uii, row_ts, svec))
        active.discard(t)
    sol = {}
    for t, lii, uii, row_ts, svec in reversed(eliminated):
        correction = np.zeros(svec.size)
        for cnode, cblk in row_ts.items():
            correction += np.linalg.solve(uii, np.linalg.solve(lii, cblk @ sol[cnode]))
        sol[t] = svec - correction
    x = np.zeros(h.n)
    for i in range(2 ** K):
        t = (K, i)
        q, p = qw[t], pw[t]
        x[loff[i]:loff[i + 1]] = sol[t][q + p:]
    return x


def hss_diagonal_representation_check(h: HSSForm) -> np.ndarray:
    """Dense evaluation of the tree diagonal representation

        A = D + U P^T (I - R Zdown)^{-1} B Zswap (I - Zdown^T W^T)^{-1} P V^T

    built from explicit operators over the stacked per-node spaces; purely a
    test bridge (O(n^3) in the worst case)."""
    K = h.tree.depth
    if K == 0:
        return h.d[0].copy()
    pw = h.row_widths()
    qw = h.col_widths()
    nodes = [(k, i) for k in range(K + 1) for i in range(2 ** k)]
    goff = {}
    foff = {}
    gtot = 0
    ftot = 0
    for t in nodes:
        goff[t] = gtot
        gtot += qw[t]
        foff[t] = ftot
        ftot += pw[t]
    n = h.n
    loff = h.tree.offsets(K)
    vt_big = np.zeros((gtot, n))
    u_big = np.zeros((n, ftot))
    for i in range(2 ** K):
        t = (K, i)
        vt_big[goff[t]:goff[t] + qw[t], loff[i]:loff[i + 1]] = h.v[i].T
        u_big[loff[i]:loff[i + 1], foff[t]:foff[t] + pw[t]] = h.u[i]
    wup = np.zeros((gtot, gtot))
    rdown = np.zeros((ftot, ftot))
    bswap = np.zeros((ftot, gtot))
    for k in range(1, K + 1):
        for i in range(2 ** k):
            t = (k, i)
            par = (k - 1, i // 2)
            wup[goff[par]:goff[par] + qw[par], goff[t]:goff[t] + qw[t]] = h.w[t].T
            rdown[foff[t]:foff[t] + pw[t], foff[par]:foff[par] + pw[par]] = h.r[t]
            s = (k, i ^ 1)
            bswap[foff[t]:foff[t] + pw[t], goff[s]:goff[s] + qw[s]] = h.b[t]
    g = np.linalg.solve(np.eye(gtot) - wup, vt_big)
    f = np.linalg.solve(np.eye(ftot) - rdown, bswap @ g)
    out = u_big @ f
    for i, di in enumerate(h.d):
        out[loff[i]:loff[i + 1], loff[i]:loff[i + 1]] += di
    return out
