"""Seeded generators for structured test matrices.

Everything is deterministic from (kind, n, seed) via numpy's default_rng;
repeated calls produce bit-identical arrays.  The random families are kept
diagonally dominant so that the unpivoted factorizations downstream stay
well conditioned.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .hss import HSSForm, PartitionTree, build_tree
from .kernel import toeplitz_dense
from .sss import SSSForm


def random_toeplitz(n: int, seed: int = 0):
    """(first_col, first_row) of a diagonally dominant Toeplitz matrix."""
    rng = np.random.default_rng(seed)
    decay = 1.0 / (1.0 + np.arange(n)) ** 2
    c = rng.uniform(-1.0, 1.0, n) * decay
    r = rng.uniform(-1.0, 1.0, n) * decay
    c[0] = r[0] = 4.0
    return c, r


def spd_toeplitz(n: int, seed: int = 0):
    """First column of a symmetric positive definite Toeplitz matrix."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1.0, 1.0, n) / (1.0 + np.arange(n)) ** 2
    c[0] = 4.0
    return c


def random_vandermonde_points(n: int, seed: int = 0) -> np.ndarray:
    """n distinct points in (-0.9, 0.9)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.9, 0.9, n)


def random_cauchy_points(n: int, seed: int = 0):
    """Well-separated point sets (x in [0, 1], y in [2, 3])."""
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 1.0, n))
    y = np.sort(rng.uniform(2.0, 3.0, n))
    return x, y


def kernel_matrix(n: int, seed: int = 0) -> np.ndarray:
    """A_{ij} = 1/(x_i - y_j) on well-separated point sets."""
    x, y = random_cauchy_points(n, seed)
    return 1.0 / np.subtract.outer(x, y)


def random_banded(n: int, bandwidth: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = np.zeros((n, n))
    i, j = np.indices((n, n))
    mask = np.abs(i - j) <= bandwidth
    a[mask] = rng.uniform(-1.0, 1.0, int(mask.sum()))
    a[np.arange(n), np.arange(n)] = 2.0 * bandwidth + 2.0
    return a


def random_sss(block_sizes, rank: int, seed: int = 0, diag_shift: float = 0.0) -> SSSForm:
    """Random SSS with every interior chain width == rank, built directly
    from components (no dense intermediate, so it scales to large n)."""
    rng = np.random.default_rng(seed)
    block_sizes = tuple(int(x) for x in block_sizes)
    nb = len(block_sizes)
    if nb == 0:
        raise DimensionMismatch("need at least one block")
    ru = [rank] * (nb - 1) + [0]
    rl = [0] + [rank] * (nb - 1) + [0]
    d, u, w, v, p, r, q = [], [], [], [], [], [], []
    for i, b in enumerate(block_sizes):
        di = rng.uniform(-1.0, 1.0, (b, b))
        di[np.arange(b), np.arange(b)] += diag_shift
        d.append(di)
        u.append(rng.uniform(-1.0, 1.0, (b, ru[i])))
        v.append(rng.uniform(-1.0, 1.0, (b, ru[i - 1] if i > 0 else 0)))
        w.append(rng.uniform(-0.5, 0.5, (ru[i - 1] if i > 0 else 0, ru[i])))
        p.append(rng.uniform(-1.0, 1.0, (b, rl[i])))
        q.append(rng.uniform(-1.0, 1.0, (b, rl[i + 1])))
        r.append(rng.uniform(-0.5, 0.5, (rl[i + 1], rl[i])))
    return SSSForm(block_sizes, d, u, w, v, p, r, q)


def random_hss(tree: PartitionTree, rank: int, seed: int = 0,
               diag_shift: float = 0.0) -> HSSForm:
    """Random HSS with uniform interior rank, directly from components."""
    rng = np.random.default_rng(seed)
    K = tree.depth
    leaves = tree.leaf_sizes
    if rank > min(leaves):
        raise DimensionMismatch("rank exceeds the smallest leaf")
    d, u, v = [], [], []
    for b in leaves:
        di = rng.uniform(-1.0, 1.0, (b, b))
        di[np.arange(b), np.arange(b)] += diag_shift
        d.append(di)
        u.append(rng.uniform(-1.0, 1.0, (b, rank if K else 0)))
        v.append(rng.uniform(-1.0, 1.0, (b, rank if K else 0)))
    r, w, b_ = {}, {}, {}
    for k in range(1, K + 1):
        par_width = 0 if k == 1 else rank
        for i in range(2 ** k):
            r[(k, i)] = rng.uniform(-0.5, 0.5, (rank, par_width))
            w[(k, i)] = rng.uniform(-0.5, 0.5, (rank, par_width))
            b_[(k, i)] = rng.uniform(-1.0, 1.0, (rank, rank))
    return HSSForm(tree, d, u, v, r, w, b_)


def dense_for_kind(kind: str, n: int, seed: int = 0, bandwidth: int = 2) -> np.ndarray:
    """Dense matrix of the named family (the CLI `gen` backend)."""
    from .displacement import cauchy_dense, vandermonde_dense
    from .hss import hss_to_dense
    from .sss import default_block_sizes, sss_to_dense

    if kind == "toeplitz":
        c, r = random_toeplitz(n, seed)
        return toeplitz_dense(c, r)
    if kind == "vandermonde":
        return vandermonde_dense(random_vandermonde_points(n, seed))
    if kind == "cauchy":
        x, y = random_cauchy_points(n, seed)
        return cauchy_dense(x, y)
    if kind == "banded":
        return random_banded(n, bandwidth, seed)
    if kind == "kernel":
        return kernel_matrix(n, seed)
    if kind == "random-sss":
        return sss_to_dense(random_sss(default_block_sizes(n), 2, seed, diag_shift=8.0))
    if kind == "random-hss":
        return hss_to_dense(random_hss(build_tree(n, 16), 2, seed, diag_shift=8.0))
    raise DimensionMismatch(f"unknown matrix kind: {kind}")
