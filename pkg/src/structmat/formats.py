"""Text file formats for dense matrices and the structured representations.

Shared matrix block: first line `rows cols`, then `rows` lines of `cols`
decimal scalars (scientific notation allowed).  The structured formats are
just sequences of such blocks behind a small header:

  generator:  `n p kindA kindB` (+ one line of diagonal values per diag
              operator), then P and Q
  sss:        `p` (block count), block sizes, then per block the matrices
              D U V W P Q R
  hss:        `n K leaf_count`, tree sizes level by level, then leaf D U V
              (breadth-first) and node R W B per level top-down
"""

from __future__ import annotations

import numpy as np

from .displacement import DisplacementOp, GeneratorForm
from .errors import FormatError
from .hss import HSSForm, PartitionTree
from .sss import SSSForm


class _Lines:
    """Cursor over non-empty lines of a text blob."""

    def __init__(self, text):
        self.lines = [ln for ln in text.splitlines() if ln.strip()]
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise FormatError("unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def done(self) -> bool:
        return self.pos >= len(self.lines)


def _format_matrix(m: np.ndarray) -> str:
    m = np.asarray(m, dtype=float)
    out = [f"{m.shape[0]} {m.shape[1]}"]
    for row in m:
        out.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(out)


def _parse_matrix(cur: _Lines) -> np.ndarray:
    header = cur.next().split()
    if len(header) != 2:
        raise FormatError(f"bad matrix header: {header!r}")
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise FormatError(f"bad matrix header: {header!r}") from None
    if rows < 0 or cols < 0:
        raise FormatError("negative matrix dimensions")
    out = np.zeros((rows, cols))
    for i in range(rows):
        parts = cur.next().split()
        if len(parts) != cols:
            raise FormatError(f"row {i} has {len(parts)} entries, expected {cols}")
        try:
            out[i] = [float(x) for x in parts]
        except ValueError:
            raise FormatError(f"non-numeric entry in row {i}") from None
    return out


def write_dense(m) -> str:
    return _format_matrix(m) + "\n"


def read_dense(text: str) -> np.ndarray:
    cur = _Lines(text)
    m = _parse_matrix(cur)
    if not cur.done():
        raise FormatError("trailing content after matrix")
    return m


def write_vector(x) -> str:
    return _format_matrix(np.asarray(x, dtype=float).reshape(-1, 1)) + "\n"


def read_vector(text: str) -> np.ndarray:
    return read_dense(text).reshape(-1)


# ---------------------------------------------------------------------------
# generator form

def write_generator(g: GeneratorForm) -> str:
    parts = [f"{g.n} {g.width} {g.opa.kind} {g.opb.kind}"]
    for op in (g.opa, g.opb):
        if op.kind == "diagonal":
            parts.append(" ".join(repr(float(x)) for x in op.values))
    parts.append(_format_matrix(g.p))
    parts.append(_format_matrix(g.q))
    return "\n".join(parts) + "\n"


def read_generator(text: str) -> GeneratorForm:
    cur = _Lines(text)
    header = cur.next().split()
    if len(header) != 4:
        raise FormatError("generator header must be `n p kindA kindB`")
    try:
        n, p = int(header[0]), int(header[1])
    except ValueError:
        raise FormatError("generator header must start with two integers") from None
    kinds = header[2:]
    ops = []
    for kind in kinds:
        if kind == "shift":
            ops.append(DisplacementOp.shift(n))
        elif kind in ("diag", "diagonal"):
            vals = cur.next().split()
            if len(vals) != n:
                raise FormatError("diagonal value line length mismatch")
            try:
                ops.append(DisplacementOp.diagonal([float(x) for x in vals]))
            except ValueError:
                raise FormatError("non-numeric diagonal value") from None
        else:
            raise FormatError(f"unknown operator kind {kind!r}")
    pm = _parse_matrix(cur)
    qm = _parse_matrix(cur)
    if pm.shape != (n, p) or qm.shape != (n, p):
        raise FormatError("P/Q dimensions disagree with the header")
    if not cur.done():
        raise FormatError("trailing content after generator data")
    return GeneratorForm(ops[0], ops[1], pm, qm)


# ---------------------------------------------------------------------------
# sss form

def write_sss(s: SSSForm) -> str:
    parts = [str(s.nb), " ".join(str(b) for b in s.block_sizes)]
    for i in range(s.nb):
        for m in (s.d[i], s.u[i], s.v[i], s.w[i], s.p[i], s.q[i], s.r[i]):
            parts.append(_format_matrix(m))
    return "\n".join(parts) + "\n"


def read_sss(text: str) -> SSSForm:
    cur = _Lines(text)
    try:
        nb = int(cur.next().strip())
    except ValueError:
        raise FormatError("sss header must be the block count") from None
    sizes = cur.next().split()
    if len(sizes) != nb:
        raise FormatError("block size line length mismatch")
    try:
        block_sizes = tuple(int(x) for x in sizes)
    except ValueError:
        raise FormatError("non-integer block size") from None
    d, u, v, w, p, q, r = [], [], [], [], [], [], []
    for _ in range(nb):
        d.append(_parse_matrix(cur))
        u.append(_parse_matrix(cur))
        v.append(_parse_matrix(cur))
        w.append(_parse_matrix(cur))
        p.append(_parse_matrix(cur))
        q.append(_parse_matrix(cur))
        r.append(_parse_matrix(cur))
    if not cur.done():
        raise FormatError("trailing content after sss data")
    try:
        return SSSForm(block_sizes, d, u, w, v, p, r, q)
    except Exception as e:
        raise FormatError(f"inconsistent sss data: {e}") from None


# ---------------------------------------------------------------------------
# hss form

def write_hss(h: HSSForm) -> str:
    K = h.tree.depth
    nleaf = len(h.d)
    parts = [f"{h.n} {K} {nleaf}"]
    for level in h.tree.sizes:
        parts.append(" ".join(str(x) for x in level))
    for i in range(nleaf):
        for m in (h.d[i], h.u[i], h.v[i]):
            parts.append(_format_matrix(m))
    for k in range(1, K + 1):
        for i in range(2 ** k):
            for m in (h.r[(k, i)], h.w[(k, i)], h.b[(k, i)]):
                parts.append(_format_matrix(m))
    return "\n".join(parts) + "\n"


def read_hss(text: str) -> HSSForm:
    cur = _Lines(text)
    header = cur.next().split()
    if len(header) != 3:
        raise FormatError("hss header must be `n K leaf_count`")
    try:
        n, K, nleaf = (int(x) for x in header)
    except ValueError:
        raise FormatError("hss header must be three integers") from None
    if nleaf != 2 ** K:
        raise FormatError("leaf count must be 2^K")
    levels = []
    for k in range(K + 1):
        parts = cur.next().split()
        if len(parts) != 2 ** k:
            raise FormatError(f"level {k} must list {2 ** k} sizes")
        try:
            levels.append([int(x) for x in parts])
        except ValueError:
            raise FormatError("non-integer tree size") from None
    if sum(levels[-1]) != n:
        raise FormatError("leaf sizes do not sum to n")
    try:
        tree = PartitionTree(levels)
    except Exception as e:
        raise FormatError(f"bad partition tree: {e}") from None
    d, u, v = [], [], []
    for _ in range(nleaf):
        d.append(_parse_matrix(cur))
        u.append(_parse_matrix(cur))
        v.append(_parse_matrix(cur))
    r, w, b = {}, {}, {}
    for k in range(1, K + 1):
        for i in range(2 ** k):
            r[(k, i)] = _parse_matrix(cur)
            w[(k, i)] = _parse_matrix(cur)
            b[(k, i)] = _parse_matrix(cur)
    if not cur.done():
        raise FormatError("trailing content after hss data")
    try:
        return HSSForm(tree, d, u, v, r, w, b)
    except Exception as e:
        raise FormatError(f"inconsistent hss data: {e}") from None
