"""Command-line harness: ``sketchy solve``, ``sketchy eig`` and ``sketchy bench``.

Exit codes: 0 success, 1 usage or input error, 2 conditioning failure,
3 when a positive ``--tol`` was requested and not reached.
"""

import argparse
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import basis as kb
from .errors import ArgumentError, ConditioningError, ParseError
from .operators import (
    laplacian_2d,
    planted_diagonal,
    read_matrix_market,
    trs_operator,
)
from .sgmres import SgmresConfig, arnoldi, gmres_baseline, sgmres_iterative
from .kernels import householder_qr, solve_upper_triangular
from .sketch import apply, make_embedding
from .srr import SrrConfig, rr_baseline, srr

EXIT_OK, EXIT_USAGE, EXIT_COND, EXIT_TOL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"ERROR: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _warn(message):
    print(f"WARN: {message}", file=sys.stderr)


def _seed(args):
    env = os.environ.get("SKETCHY_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SKETCHY_SEED must be an integer, got {env!r}") from None
    return args.seed


def _problem(args):
    """Return ``(operator, kind)`` for ``--matrix`` or ``--gen``."""
    if bool(args.matrix) == bool(args.gen):
        raise UsageError("give exactly one of --matrix and --gen")
    if args.matrix:
        try:
            return read_matrix_market(args.matrix), "file"
        except OSError as exc:
            raise UsageError(f"cannot read matrix file: {exc}") from None
        except ParseError as exc:
            raise UsageError(f"{args.matrix}: {exc}") from None
    kind, _, size = args.gen.partition(":")
    try:
        size = int(size)
    except ValueError:
        raise UsageError(f"bad generator size in {args.gen!r}") from None
    if kind == "laplacian2d":
        return laplacian_2d(size), kind
    if kind == "trs":
        return trs_operator(size), kind
    if kind == "planted":
        return planted_diagonal(size), kind
    raise UsageError(f"unknown generator {kind!r}; expected laplacian2d, trs or planted")


def _parse_box(text):
    try:
        c, dx, dy = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--box expects c,dx,dy, got {text!r}") from None
    return kb.SpectralBox(c, dx, dy)


def _default_box(op, kind, args, seed):
    if args.box:
        return _parse_box(args.box)
    if kind == "laplacian2d":
        return kb.SpectralBox(4.0, 4.0, 0.0)
    if kind == "planted":
        return kb.SpectralBox(0.5, 0.55, 0.0)
    return kb.estimate_spectral_box(op, seed=seed)


def _split_basis(text):
    name, _, arg = text.partition(":")
    k = None
    if arg:
        try:
            k = int(arg)
        except ValueError:
            raise UsageError(f"bad basis parameter in {text!r}") from None
    return name, k


def _rhs(args, op, kind, seed):
    n = op.shape[0]
    if args.rhs == "random":
        f = np.random.default_rng(seed).standard_normal(n)
        if kind == "laplacian2d":
            f -= f.mean()  # the Neumann Laplacian is singular on constants
        return f
    try:
        f = np.loadtxt(args.rhs, dtype=float).reshape(-1)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read right-hand side: {exc}") from None
    if f.size != n:
        raise UsageError(f"right-hand side has length {f.size}, operator has order {n}")
    return f


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10e}"


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _emit(args, header, rows, summary):
    if args.format == "json":
        doc = {
            "summary": {k: _jsonable(v) for k, v in summary.items()},
            "history": [{h: _jsonable(v) for h, v in zip(header, row)} for row in rows],
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        lines = [f"# {k}: {_fmt(v) if isinstance(v, float) else v}" for k, v in summary.items()]
        lines.append(",".join(header))
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args):
    op, kind = _problem(args)
    seed = _seed(args)
    n = op.shape[0]
    if not 1 <= args.d <= n:
        raise UsageError(f"--d must lie in [1, {n}], got {args.d}")
    f = _rhs(args, op, kind, seed)
    fnorm = np.linalg.norm(f)
    if fnorm == 0:
        raise UsageError("right-hand side is zero")
    header = ["iter", "r_est", "true_res", "cond", "ms"]
    status = EXIT_OK

    if args.method == "gmres":
        start = time.perf_counter()
        res = gmres_baseline(op, f, d=args.d)
        ms = 0.0 if args.no_timing else 1e3 * (time.perf_counter() - start)
        rows = [[j + 1, r / fnorm, float("nan"), float("nan"), float("nan")]
                for j, r in enumerate(res.residuals)]
        if rows:
            rows[-1][2] = res.true_residual / fnorm
            rows[-1][4] = ms
        final = res.true_residual / fnorm
        summary = {"method": "gmres", "n": n, "d": args.d, "iterations": res.iterations,
                   "residual": final, "restarts": 0}
    else:
        name, k = _split_basis(args.basis)
        if name not in ("arnoldi", "lanczos", "chebyshev", "newton", "monomial"):
            raise UsageError(f"unknown basis {name!r} for solve")
        box = _default_box(op, kind, args, seed) if name == "chebyshev" else None
        config = SgmresConfig(
            d_max=args.d, basis=name, k=k or 2, box=box, embedding=args.embedding, seed=seed,
            restart=args.restart, tol=args.tol, max_iter=args.max_iter or args.d,
            true_res_every=args.true_res_every,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = sgmres_iterative(op, f, config=config)
        for message in res.warnings:
            _warn(message)
        rows = []
        for j, (r_est, cond, true_res, sec) in enumerate(res.history, start=1):
            ms = 0.0 if args.no_timing else 1e3 * sec
            rows.append([j, r_est / fnorm, true_res / fnorm, cond, ms])
        final = res.true_residual / fnorm
        summary = {"method": "sgmres", "n": n, "d": args.d, "iterations": res.iterations,
                   "residual": final, "r_est": res.r_est / fnorm, "restarts": res.restarts,
                   "reliable": res.reliable}
        if not res.reliable:
            status = EXIT_COND
    _emit(args, header, rows, summary)
    if status == EXIT_OK and args.tol > 0 and final > args.tol:
        _warn(f"relative residual {final:.3e} did not reach tolerance {args.tol:.1e}")
        status = EXIT_TOL
    return status


def _eig_basis(args, op, kind, seed):
    name, k = _split_basis(args.basis)
    n = op.shape[0]
    rng = np.random.default_rng(seed)
    if name.startswith("block"):
        if not args.block or not args.depth:
            raise UsageError("block bases need --block and --depth")
        Omega = rng.standard_normal((n, args.block))
        if name == "blockcheb":
            return kb.block_basis(op, Omega, args.depth, "chebyshev", box=_default_box(op, kind, args, seed))
        if name == "blockmono":
            return kb.block_basis(op, Omega, args.depth, "monomial_orth")
        if name == "blockarnoldi":
            return kb.block_basis(op, Omega, args.depth, "partial_orth", k=k or 2)
        raise UsageError(f"unknown block basis {name!r}")
    if not args.d or not 1 <= args.d <= n:
        raise UsageError(f"--d must lie in [1, {n}]")
    r = rng.standard_normal(n)
    if name == "arnoldi":
        return kb.partial_arnoldi(op, r, args.d, k or 2)
    if name == "lanczos":
        return kb.lanczos(op, r, args.d)
    if name == "chebyshev":
        return kb.chebyshev_basis(op, r, args.d, _default_box(op, kind, args, seed))
    if name == "monomial":
        return kb.monomial_basis(op, r, args.d)
    raise UsageError(f"unknown basis {name!r} for eig")


def cmd_eig(args):
    op, kind = _problem(args)
    seed = _seed(args)
    basis = _eig_basis(args, op, kind, seed)
    header = ["theta_re", "theta_im", "r_est"]
    summary = {"method": args.method, "n": op.shape[0], "d": basis.d, "breakdown": basis.breakdown}
    if args.method == "rr":
        res = rr_baseline(op, basis)
        scale = np.max(np.abs(res.thetas))
        keep = res.residuals < args.tau * scale
        rows = [[t.real, t.imag, r] for t, r in zip(res.thetas[keep], res.residuals[keep])]
        summary["accepted"] = int(keep.sum())
    else:
        config = SrrConfig(embedding=args.embedding, seed=seed, tau=args.tau,
                           cond_tol=args.cond_tol,
                           stabilize="on" if args.method == "srrstab" else args.stabilize,
                           symmetric=args.symmetric)
        try:
            res = srr(basis, config)
        except ConditioningError as exc:
            _warn(f"{exc}; rerun with --method srrstab")
            return EXIT_COND
        if res.stabilized and args.method == "srr":
            _warn(f"sketched basis has condition number {res.cond:.3e}; "
                  f"used the stabilized variant (rank {res.rank})")
        rows = [[complex(p.theta).real, complex(p.theta).imag, p.r_est] for p in res.accepted_pairs]
        summary.update(cond=res.cond, stabilized=res.stabilized, rank=res.rank,
                       accepted=len(res.accepted))
    _emit(args, header, rows, summary)
    return EXIT_OK


def _time_phases(phases, repeat):
    """Run ``phases`` (name, fn) in sequence ``repeat`` times; each fn takes the previous output.

    Phases and the total come from the same runs, so the medians add up
    to the median total up to timing noise.
    """
    times = {name: [] for name, _ in phases}
    times["total"] = []
    for _ in range(repeat):
        out = None
        start = time.perf_counter()
        for name, fn in phases:
            t = time.perf_counter()
            out = fn(out)
            times[name].append(time.perf_counter() - t)
        times["total"].append(time.perf_counter() - start)
    return {name: float(np.median(v)) for name, v in times.items()}


def _sgmres_phases(op, f, d, seed, repeat):
    n = op.shape[0]
    S = make_embedding("trig", n, min(2 * d + 1, n), seed)

    def basis(_):
        return kb.partial_arnoldi(op, f, d, 2)

    def sketch(B):
        return B, apply(S, B.AB), apply(S, f)

    def solve(state):
        B, SAB, g = state
        U, T = householder_qr(SAB)
        return B, solve_upper_triangular(T, U.T @ g)

    def assembly(state):
        B, y = state
        return B.B @ y

    t = _time_phases([("basis", basis), ("sketch", sketch), ("solve", solve), ("assembly", assembly)], repeat)
    t["ls"] = t["sketch"] + t["solve"]
    return t


def _gmres_phases(op, f, d, repeat):
    beta = np.linalg.norm(f)

    def basis(_):
        return arnoldi(op, f, d)

    def solve(state):
        Q, H, j = state
        rhs = np.zeros(j + 1)
        rhs[0] = beta
        return Q[:, :j], np.linalg.lstsq(H[: j + 1, :j], rhs, rcond=None)[0]

    def assembly(state):
        Q, y = state
        return Q @ y

    t = _time_phases([("basis", basis), ("solve", solve), ("assembly", assembly)], repeat)
    t["sketch"] = 0.0
    t["ls"] = t["solve"]
    return t


def _fit(xs, ts):
    return float(np.polyfit(np.log(xs), np.log(ts), 1)[0])


def run_bench(n_list, d_list, repeat=3, fixed_d=50, fixed_n=2**14, seed=0):
    """Time the phases of sGMRES over ``n_list`` and of GMRES over ``d_list``.

    Problems are 2D Laplacians, so every ``n`` must be a perfect square.
    Returns the rows and the fitted log-log exponents.
    """
    rows = []

    def problem(n):
        m = math.isqrt(n)
        if m * m != n:
            raise ArgumentError(f"bench sizes must be perfect squares, got {n}")
        op = laplacian_2d(m)
        f = np.random.default_rng(seed).standard_normal(n)
        return op, f - f.mean()

    for n in n_list:
        op, f = problem(n)
        rows.append(("sgmres", n, fixed_d, _sgmres_phases(op, f, fixed_d, seed, repeat)))
    op, f = problem(fixed_n)
    for d in d_list:
        rows.append(("gmres", fixed_n, d, _gmres_phases(op, f, d, repeat)))
    sg = [r for r in rows if r[0] == "sgmres"]
    gm = [r for r in rows if r[0] == "gmres"]
    fits = {}
    if len(sg) > 1:
        fits["sgmres_ls_vs_n"] = _fit([r[1] for r in sg], [r[3]["ls"] for r in sg])
    if len(gm) > 1:
        fits["gmres_basis_vs_d"] = _fit([r[2] for r in gm], [r[3]["basis"] for r in gm])
    return rows, fits


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from None


def cmd_bench(args):
    rows, fits = run_bench(_int_list(args.n_list), _int_list(args.d_list), args.repeat,
                           args.fixed_d, args.fixed_n, _seed(args))
    phases = ["basis", "sketch", "solve", "assembly", "ls", "total"]
    header = ["method", "n", "d"] + [f"{p}_ms" for p in phases]
    table = [[m, n, d] + [1e3 * t[p] for p in phases] for m, n, d, t in rows]
    summary = {f"fit_{k}": v for k, v in fits.items()}
    _emit(args, header, table, summary)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="sketchy", description="Sketched GMRES and Rayleigh-Ritz experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--matrix", help="MatrixMarket file")
        p.add_argument("--gen", help="laplacian2d:<m> | trs:<n> | planted:<n>")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--embedding", choices=["trig", "sparse"], default="trig")
        p.add_argument("--box", help="spectral box c,dx,dy for Chebyshev bases")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("solve", help="solve A x = f")
    common(p)
    p.add_argument("--rhs", default="random", help="'random' or a whitespace-separated vector file")
    p.add_argument("--method", choices=["sgmres", "gmres"], default="sgmres")
    p.add_argument("--basis", default="arnoldi:2")
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--restart", choices=["adaptive", "whiten", "none"], default="adaptive")
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--true-res-every", type=int, default=25)
    p.add_argument("--no-timing", action="store_true", help="write 0 in the ms column")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eig", help="approximate eigenpairs")
    common(p)
    p.add_argument("--method", choices=["srr", "srrstab", "rr"], default="srr")
    p.add_argument("--basis", default="arnoldi:2")
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--block", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--tau", type=float, default=1e-6)
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--cond-tol", type=float, default=1e14)
    p.add_argument("--stabilize", choices=["auto", "off"], default="auto",
                   help="for --method srr: fall back to the stabilized variant or fail with exit 2")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("bench", help="phase timings and scaling fits")
    p.add_argument("--n-list", default="16384,65536,262144")
    p.add_argument("--d-list", default="50,100,200,400")
    p.add_argument("--fixed-d", type=int, default=50)
    p.add_argument("--fixed-n", type=int, default=16384)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ArgumentError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
