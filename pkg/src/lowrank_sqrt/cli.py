"""Command line entry point: ``python -m lowrank_sqrt <subcommand>``.

Exit status is 0 on success, 2 when a downdate is infeasible and 1 when a
solver fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from . import apps, experiments
from .exceptions import InfeasibleDowndateError
from .mmio import read_matrix
from .operators import DiagonalOperator, dense_principal_root

log = logging.getLogger("lowrank_sqrt")

EXIT_OK, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 1, 2


def parse_ranks(text: str) -> List[int]:
    """``"1..20"`` or ``"1,2,5"`` or ``"7"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise argparse.ArgumentTypeError("empty rank range")
        return list(range(lo, hi + 1))
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad rank list {text!r}") from exc


def _sign(text):
    v = int(text)
    if v not in (1, -1):
        raise argparse.ArgumentTypeError("must be +1 or -1")
    return v


def _emit(kind, rows, out):
    text = experiments.format_csv(kind, rows)
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _spec(args, ranks=None):
    return experiments.ExperimentSpec(
        family=args.family, n=args.n, alpha=args.alpha, beta=args.beta,
        rank_sweep=ranks if ranks is not None else args.ranks, downdate_scale=args.downdate_scale,
        seed=args.seed, output_path=args.out, k=args.k, tol=args.tol, matrix_path=args.matrix)


def cmd_synthetic(args):
    rows = experiments.run_synthetic(_spec(args), verify=args.verify)
    _emit("synthetic", rows, args.out)
    if args.verify:
        print(f"verified {len(rows)} rows against an independent dense root", file=sys.stderr)
    return EXIT_INFEASIBLE if any(r["status"] == "infeasible" for r in rows) else EXIT_OK


def cmd_decay(args):
    rows = experiments.run_decay(_spec(args, ranks=[]))
    _emit("decay", rows, args.out)
    return EXIT_OK


def cmd_tracking(args):
    rows = experiments.run_tracking(args.n, args.steps, args.step_rank, args.eps, args.seed,
                                    tols=args.tols, stream=args.stream)
    _emit("tracking", rows, args.out)
    return EXIT_OK


def _rank(args, default):
    return args.ranks[-1] if args.ranks else default


def cmd_zca(args):
    rng = np.random.default_rng(args.seed)
    p, k = args.n, args.k
    cov = apps.SpikedCovariance(1.0, rng.standard_normal((p, k)))
    U = apps.zca_fit(cov, _rank(args, 4 * k), tol=args.tol, seed=args.seed)
    exact = dense_principal_root(cov.to_dense(), 2, inverse=True).entries
    err = np.linalg.norm(exact - (np.eye(p) + U.to_dense())) / np.linalg.norm(exact)
    data = rng.multivariate_normal(np.zeros(p), cov.to_dense(), size=args.samples)
    white = apps.zca_apply((1.0, U), data)
    C = np.cov(white.T)
    print(f"zca p={p} k={k} r={U.width}: relative error {err:.3e}, "
          f"||cov(whitened) - I||_2 = {np.linalg.norm(C - np.eye(p), 2):.3e} over {args.samples} samples")
    return EXIT_OK


def cmd_gls(args):
    rng = np.random.default_rng(args.seed)
    if args.matrix:
        X = read_matrix(args.matrix)
    else:
        X = rng.standard_normal((args.n, 5))
    n, d = X.shape
    w_true = rng.standard_normal(d)
    D = DiagonalOperator(rng.uniform(0.5, 2.0, n))
    Z = rng.standard_normal((n, args.k)) * (0.3 if args.alpha == 1 else 0.3 * args.downdate_scale)
    C = np.diag(D.entries) + args.alpha * (Z @ Z.T)
    y = X @ w_true + np.linalg.cholesky(C) @ rng.standard_normal(n)
    w = apps.gls_solve(X, y, D, Z, args.alpha, _rank(args, 4 * args.k), tol=args.tol, seed=args.seed)
    Ci = np.linalg.inv(C)
    w_dense = np.linalg.solve(X.T @ Ci @ X, X.T @ Ci @ y)
    print(f"gls n={n} d={d}: coefficient error vs dense GLS {np.linalg.norm(w - w_dense) / np.linalg.norm(w_dense):.3e}")
    return EXIT_OK


def cmd_polar(args):
    rng = np.random.default_rng(args.seed)
    X = read_matrix(args.matrix) if args.matrix else rng.standard_normal((args.n, 5))
    st = apps.PolarState.from_matrix(X, rank=_rank(args, 4), tol=args.tol)
    st = apps.polar_downdate(st, X.shape[0] - 1)
    Xm = X[:-1]
    _, s, Vt = np.linalg.svd(Xm, full_matrices=False)
    P = (Vt.T * s) @ Vt
    err = np.linalg.norm(st.P.to_dense() - P) / np.linalg.norm(P)
    orth = np.linalg.norm(st.U_factor.T @ st.U_factor - np.eye(X.shape[1]))
    print(f"polar downdate of a {X.shape[0]}x{X.shape[1]} matrix: P error {err:.3e}, "
          f"||U^T U - I||_F = {orth:.3e}")
    return EXIT_OK


def cmd_sample(args):
    rng = np.random.default_rng(args.seed)
    n = args.n
    q0 = rng.uniform(0.5, 2.0, n)
    Z = rng.standard_normal((n, args.k))
    X = apps.gaussian_sample(np.zeros(n), DiagonalOperator(q0 ** -0.5), Z, _rank(args, 4 * args.k),
                             args.samples, seed=args.seed, Q0_sqrt=DiagonalOperator(q0 ** 0.5), tol=args.tol)
    cov = np.linalg.inv(np.diag(q0) + Z @ Z.T)
    err = np.linalg.norm(np.cov(X.T) - cov, 2) / np.linalg.norm(cov, 2)
    if args.out:
        np.savetxt(args.out, X, delimiter=",", fmt="%.10e")
    print(f"sampled {args.samples} draws in dimension {n}: spectral relative covariance error {err:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lowrank-sqrt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n=100):
        sp.add_argument("--family", default="uniform_diag", choices=["uniform_diag", "logspace_diag", "file"])
        sp.add_argument("--n", type=int, default=n)
        sp.add_argument("--k", type=int, default=1)
        sp.add_argument("--alpha", type=_sign, default=1)
        sp.add_argument("--beta", type=_sign, default=1)
        sp.add_argument("--ranks", type=parse_ranks, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--downdate-scale", type=float, default=0.1)
        sp.add_argument("--out", default=None)
        sp.add_argument("--verify", action="store_true")
        sp.add_argument("--matrix", default=None, help="Matrix Market file (family=file, or data for demos)")
        sp.add_argument("--samples", type=int, default=20000)
        return sp

    common(sub.add_parser("synthetic", help="error versus rank against the dense root")).set_defaults(
        func=cmd_synthetic)
    common(sub.add_parser("decay", help="singular value decay against the bound")).set_defaults(func=cmd_decay)
    tr = common(sub.add_parser("tracking", help="track L_t^{-1/4} over a stream of rank-k steps"), n=200)
    tr.add_argument("--steps", type=int, default=40)
    tr.add_argument("--step-rank", type=int, default=5)
    tr.add_argument("--eps", type=float, default=1e-3)
    tr.add_argument("--stream", default="eigen", choices=["eigen", "gaussian"])
    tr.add_argument("--tols", type=lambda s: [float(t) for t in s.split(",")],
                    default=list(experiments.TRACKING_TOLS))
    tr.set_defaults(func=cmd_tracking)
    common(sub.add_parser("zca-demo", help="ZCA whitening of a spiked covariance")).set_defaults(func=cmd_zca)
    common(sub.add_parser("gls-demo", help="GLS with a spiked noise covariance"), n=200).set_defaults(
        func=cmd_gls)
    common(sub.add_parser("polar-demo", help="polar decomposition row downdate"), n=50).set_defaults(
        func=cmd_polar)
    common(sub.add_parser("sample-demo", help="sampling with a perturbed precision"), n=20).set_defaults(
        func=cmd_sample)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "synthetic" and args.ranks is None:
        args.ranks = list(range(1, 21))
    if args.family == "file" and args.command in ("synthetic", "decay") and not args.matrix:
        print("error: --family file needs --matrix", file=sys.stderr)
        return EXIT_SOLVER
    try:
        return args.func(args)
    except InfeasibleDowndateError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (np.linalg.LinAlgError, ArithmeticError, AssertionError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
