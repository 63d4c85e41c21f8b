"""Command-line front end.

Commands: gen, compress, matvec, solve, verify, bench.  Exit codes:
0 success, 1 usage error, 2 numerical failure (pivot breakdown, singular
operator, tolerance exceeded, ...), 3 I/O or file-format error.
"""

from __future__ import annotations

import sys
import time

import click
import numpy as np

from . import counting, formats, gen as genmod
from .displacement import (
    DisplacementOp,
    GeneratorForm,
    generator_apply,
    generators_cauchy,
    generalized_schur_lu,
    reconstruct,
)
from .errors import (
    FormatError,
    PivotBreakdown,
    PoleCollision,
    SeriesDivergence,
    SingularOperator,
    StructmatError,
    UnsupportedOperator,
)
from .hss import (
    build_tree,
    hss_construct,
    hss_matvec,
    hss_sparse_solve,
    hss_to_dense,
)
from .kernel import dense_lu_no_pivot, truncated_factorization
from .sss import (
    sss_construct,
    sss_matvec,
    sss_solve,
    sss_to_dense,
)

KINDS = ("toeplitz", "vandermonde", "cauchy", "banded", "kernel",
         "random-sss", "random-hss")
FORMATS = ("generator", "sss", "hss", "dense")


def _read_text(path):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from None


def _write_text(path, text):
    if path is None:
        click.echo(text, nl=False)
        return
    with open(path, "w") as fh:
        fh.write(text)


def _shift_generators(a, tol):
    """Shift/shift generator compression of a dense matrix."""
    n = a.shape[0]
    z = DisplacementOp.shift(n)
    disp = a.copy()
    disp[1:, 1:] -= a[:-1, :-1]
    lr = truncated_factorization(disp, tol)
    return GeneratorForm(z, z, lr.left, lr.right)


def _uniform_blocks(n, block):
    sizes = []
    rest = n
    while rest > 0:
        sizes.append(min(block, rest))
        rest -= sizes[-1]
    return tuple(sizes)


def _compress(a, fmt, tol, block, leaf):
    if fmt == "generator":
        return _shift_generators(a, tol)
    if fmt == "sss":
        return sss_construct(a, _uniform_blocks(a.shape[0], block), tol)
    if fmt == "hss":
        return hss_construct(a, build_tree(a.shape[0], leaf), tol)
    return a


def _write_rep(rep, fmt):
    if fmt == "generator":
        return formats.write_generator(rep)
    if fmt == "sss":
        return formats.write_sss(rep)
    if fmt == "hss":
        return formats.write_hss(rep)
    return formats.write_dense(rep)


def _read_rep(text, fmt):
    if fmt == "generator":
        return formats.read_generator(text)
    if fmt == "sss":
        return formats.read_sss(text)
    if fmt == "hss":
        return formats.read_hss(text)
    return formats.read_dense(text)


def _rep_size(rep, fmt):
    if fmt == "generator":
        return rep.n
    if fmt in ("sss", "hss"):
        return rep.n
    return rep.shape[0]


def _rep_matvec(rep, fmt, x):
    if fmt == "generator":
        return generator_apply(rep, x)
    if fmt == "sss":
        return sss_matvec(rep, x)
    if fmt == "hss":
        return hss_matvec(rep, x)
    return rep @ x


def _rep_solve(rep, fmt, b, pivot_tol):
    if fmt == "generator":
        res = generalized_schur_lu(rep, pivot_tol)
        return np.linalg.solve(res.u, np.linalg.solve(res.l, b))
    if fmt == "sss":
        return sss_solve(rep, b, pivot_tol)
    if fmt == "hss":
        return hss_sparse_solve(rep, b, pivot_tol)
    lii, uii = dense_lu_no_pivot(rep, pivot_tol)
    return np.linalg.solve(uii, np.linalg.solve(lii, b))


@click.group()
def cli():
    """Structured-matrix toolkit: displacement, SSS, and HSS algebra."""


@cli.command("gen")
@click.option("--kind", type=click.Choice(KINDS), required=True)
@click.option("--n", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--bandwidth", type=int, default=2, show_default=True,
              help="band half-width for --kind banded")
@click.option("--degenerate", is_flag=True,
              help="use coinciding Cauchy point sets (error-path demo)")
@click.option("--out", type=click.Path(), default=None)
def cmd_gen(kind, n, seed, bandwidth, degenerate, out):
    """Generate a structured test matrix (dense text format)."""
    if n < 1:
        raise click.UsageError("--n must be >= 1")
    if kind == "cauchy":
        x, y = genmod.random_cauchy_points(n, seed)
        if degenerate:
            y = x.copy()
        generators_cauchy(x, y)  # surfaces PoleCollision / ZeroY
        a = 1.0 / np.subtract.outer(y, x)
    else:
        a = genmod.dense_for_kind(kind, n, seed, bandwidth)
    _write_text(out, formats.write_dense(a))


@cli.command("compress")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="sss",
              show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--block", type=int, default=32, show_default=True)
@click.option("--leaf", type=int, default=64, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def cmd_compress(in_path, fmt, tol, block, leaf, out):
    """Compress a dense matrix file into a structured representation."""
    if tol <= 0:
        raise click.UsageError("--tol must be positive")
    a = formats.read_dense(_read_text(in_path))
    rep = _compress(a, fmt, tol, block, leaf)
    _write_text(out, _write_rep(rep, fmt))


@cli.command("matvec")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="dense",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="seed for the probe vector")
@click.option("--out", type=click.Path(), default=None)
def cmd_matvec(in_path, fmt, seed, out):
    """Apply a stored representation to a seeded random vector."""
    rep = _read_rep(_read_text(in_path), fmt)
    n = _rep_size(rep, fmt)
    x = np.random.default_rng(seed).standard_normal(n)
    y = _rep_matvec(rep, fmt, x)
    _write_text(out, formats.write_vector(y))


@cli.command("solve")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="dense",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="seed for the right-hand side")
@click.option("--tol", type=float, default=1e-12, show_default=True,
              help="pivot breakdown tolerance")
@click.option("--out", type=click.Path(), default=None)
def cmd_solve(in_path, fmt, seed, tol, out):
    """Solve A x = b for a seeded right-hand side."""
    rep = _read_rep(_read_text(in_path), fmt)
    n = _rep_size(rep, fmt)
    b = np.random.default_rng(seed).standard_normal(n)
    x = _rep_solve(rep, fmt, b, tol)
    _write_text(out, formats.write_vector(x))


@cli.command("verify")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="sss",
              show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--block", type=int, default=32, show_default=True)
@click.option("--leaf", type=int, default=64, show_default=True)
def cmd_verify(in_path, fmt, tol, block, leaf):
    """Check a representation against the dense oracle.

    Accepts either a dense matrix file (compressed at --tol, then compared
    round-trip) or a representation file in the named format (checked for
    internal consistency against its own dense bridge).
    """
    text = _read_text(in_path)
    rep = None
    if fmt != "dense":
        try:
            rep = _read_rep(text, fmt)
        except FormatError:
            rep = None
    if rep is None:
        a = formats.read_dense(text)
        rep = _compress(a, fmt, tol, block, leaf)
    else:
        if fmt == "generator":
            a = reconstruct(rep)
        elif fmt == "sss":
            a = sss_to_dense(rep)
        else:
            a = hss_to_dense(rep)
    if fmt == "generator":
        rec = reconstruct(rep)
        ranks = [rep.width]
    elif fmt == "sss":
        rec = sss_to_dense(rep)
        ranks = rep.upper_ranks[:-1] + rep.lower_ranks[1:-1]
    elif fmt == "hss":
        rec = hss_to_dense(rep)
        ranks = [rep.max_rank()]
    else:
        rec = rep
        ranks = []
    denom = np.linalg.norm(a) or 1.0
    err = np.linalg.norm(rec - a) / denom
    click.echo(f"max relative error: {err:.3e}")
    click.echo(f"measured ranks: {max(ranks) if ranks else 0}")
    if err > 100.0 * tol:
        click.echo("tolerance exceeded", err=True)
        sys.exit(2)


BENCH_OPS = ("sss-matvec", "sss-solve", "hss-matvec", "hss-solve",
             "gs-lu", "dense-lu", "gs-apply")
_DEFAULT_SIZES = {
    "sss-matvec": "256,512,1024,2048,4096,8192",
    "sss-solve": "256,512,1024,2048,4096,8192",
    "hss-matvec": "256,512,1024,2048,4096,8192",
    "hss-solve": "256,512,1024,2048,4096,8192",
    "gs-lu": "256,512,1024,2048",
    "dense-lu": "256,512,1024,2048",
    "gs-apply": "256,512,1024,2048,4096,8192",
}


def _bench_once(op, n, seed):
    rng = np.random.default_rng(seed)
    if op == "sss-matvec" or op == "sss-solve":
        s = genmod.random_sss(_uniform_blocks(n, 64), 3, seed, diag_shift=16.0)
        x = rng.standard_normal(n)
        with counting.counted() as c:
            if op == "sss-matvec":
                sss_matvec(s, x)
            else:
                sss_solve(s, x)
        return c.ops
    if op == "hss-matvec" or op == "hss-solve":
        h = genmod.random_hss(build_tree(n, 64), 3, seed, diag_shift=16.0)
        x = rng.standard_normal(n)
        with counting.counted() as c:
            if op == "hss-matvec":
                hss_matvec(h, x)
            else:
                hss_sparse_solve(h, x)
        return c.ops
    if op == "gs-lu":
        from .displacement import generators_toeplitz
        c0, r0 = genmod.random_toeplitz(n, seed)
        g = generators_toeplitz(c0, r0)
        with counting.counted() as c:
            generalized_schur_lu(g)
        return c.ops
    if op == "dense-lu":
        a = rng.standard_normal((n, n))
        a[np.arange(n), np.arange(n)] += float(n)
        with counting.counted() as c:
            dense_lu_no_pivot(a)
        return c.ops
    if op == "gs-apply":
        from .displacement import gs_apply_inverse
        z = DisplacementOp.shift(n)
        g = GeneratorForm(z, z, rng.standard_normal((n, 2)),
                          rng.standard_normal((n, 2)))
        x = rng.standard_normal(n)
        with counting.counted() as c:
            gs_apply_inverse(g, x)
        return c.ops
    raise click.UsageError(f"unknown bench op {op!r}")


@cli.command("bench")
@click.option("--op", type=click.Choice(BENCH_OPS), required=True)
@click.option("--rep", type=int, default=1, show_default=True)
@click.option("--sizes", type=str, default=None,
              help="comma-separated problem sizes (defaults per op)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def cmd_bench(op, rep, sizes, seed, out):
    """Scaling benchmark; emits CSV and prints the fitted log-log slope."""
    if rep < 1:
        raise click.UsageError("--rep must be >= 1")
    sizes = sizes or _DEFAULT_SIZES[op]
    try:
        ns = [int(x) for x in sizes.split(",")]
    except ValueError:
        raise click.UsageError("--sizes must be comma-separated integers") from None
    rows = ["n,op,rep,counted_ops,wall_ns"]
    means = []
    for n in ns:
        per_rep = []
        for j in range(rep):
            t0 = time.perf_counter_ns()
            ops = _bench_once(op, n, seed + j)
            wall = time.perf_counter_ns() - t0
            per_rep.append(ops)
            rows.append(f"{n},{op},{j},{ops},{wall}")
        means.append(float(np.mean(per_rep)))
    slope = float(np.polyfit(np.log(ns), np.log(means), 1)[0]) if len(ns) > 1 else float("nan")
    _write_text(out, "\n".join(rows) + "\n")
    click.echo(f"slope {op} {slope:.3f}")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except (PivotBreakdown, SingularOperator, SeriesDivergence,
            PoleCollision, UnsupportedOperator) as e:
        click.echo(f"numerical failure: {e}", err=True)
        sys.exit(2)
    except (FormatError, OSError) as e:
        click.echo(f"i/o error: {e}", err=True)
        sys.exit(3)
    except StructmatError as e:
        click.echo(f"usage error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
