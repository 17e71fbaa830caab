"""Command line driver: build operators, benchmark products, solve systems.

Subcommands:
  build         assemble a compressed kernel operator, print a stats row
  matvec-bench  time single-vector products over (n, threads) sweeps
  matmat-bench  time blocked products against the m-fold column loop
  solve         manufactured-solution solve with a chosen solver/preconditioner

All output is CSV: one header plus one row per sweep point on stdout, and
the same rows appended to --csv <path> when given. Exit codes: 0 success,
1 runtime failure, 2 usage or validation error, 3 non-convergence.
Headers are stable byte-for-byte; see docs/csv-schema.md.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import statistics
import sys
import time

import numpy as np

from .apply import addeval_block, addeval_list
from .blocktree import build_block_tree
from .cluster import build_cluster_tree
from .errors import (BreakdownError, ContractError, DimensionMismatchError,
                     EmptyInputError, FactorizationError)
from .geometry import PointCloud, fibonacci_sphere
from .h2matrix import assemble_h2, densify
from .kernels import dense_collocation_matrix, helmholtz3d, laplace3d
from .krylov import H2Operator, SolveOptions, block_pcg, block_pgmres
from .precond import (FactorPreconditioner, Preconditioner,
                      block_jacobi_from_nearfield, ic_drop_factor,
                      ilu_drop_factor)

THREADS_ENV = "H2KRYLOV_THREADS"
DENSE_ORACLE_MAX_N = 4096
BENCH_REPS = 5

HEADERS = {
    "build": ("n,kernel,kappa,order,k,eta,leaf_size,n_adm,n_inadm,c_sp,"
              "mem_bytes,mem_dense_bytes,t_build,rel_frobenius_error"),
    "matvec-bench": ("n,kernel,kappa,order,eta,leaf_size,threads,reps,"
                     "t_matvec,effective_GBps_model,determinism_hash,"
                     "verify_max_rel_err"),
    "matmat-bench": ("n,kernel,kappa,order,eta,leaf_size,threads,m,reps,"
                     "t_matvec,t_matmat,speedup_block_vs_mfold,"
                     "effective_GBps_model,verify_max_rel_err"),
    "solve": ("solver,precond,n,m,kernel,kappa,order,eta,leaf_size,eps_slv,"
              "tau,restart,threads,seed,iterations,converged_count,"
              "max_rel_error,max_true_residual,t_total,t_addmul,t_precond,"
              "t_core"),
}


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _emit(command, rows, csv_path):
    header = HEADERS[command]
    lines = [",".join(_fmt(v) for v in row) for row in rows]
    print(header)
    for line in lines:
        print(line)
    if csv_path:
        need_header = (not os.path.exists(csv_path)
                       or os.path.getsize(csv_path) == 0)
        with open(csv_path, "a", encoding="ascii") as f:
            if need_header:
                f.write(header + "\n")
            for line in lines:
                f.write(line + "\n")


def _make_kernel(args):
    if args.kernel == "laplace":
        return laplace3d()
    return helmholtz3d(args.kappa)


def _build_operator(args, n):
    kernel = _make_kernel(args)
    cloud = fibonacci_sphere(n)
    tree = build_cluster_tree(cloud, leaf_size=args.leaf_size)
    block_tree = build_block_tree(tree, tree, eta=args.eta)
    t0 = time.perf_counter()
    h2 = assemble_h2(kernel, cloud, tree, block_tree, args.order)
    t_build = time.perf_counter() - t0
    return kernel, cloud, h2, t_build


def _random_block(rng, n, m, complex_valued):
    x = rng.standard_normal((n, m))
    if complex_valued:
        x = x + 1j * rng.standard_normal((n, m))
    return np.asfortranarray(x)


def _median_times(fn, reps=BENCH_REPS):
    fn()  # warmup, discarded
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


# -- commands ----------------------------------------------------------------

def cmd_build(args):
    kernel, cloud, h2, t_build = _build_operator(args, args.n)
    stats = h2.stats()
    rel_err = None
    if args.verify:
        if args.n <= DENSE_ORACLE_MAX_N:
            exact = dense_collocation_matrix(kernel, cloud.points, diag=h2.diag)
            approx = densify(h2)
            rel_err = float(np.linalg.norm(approx - exact)
                            / np.linalg.norm(exact))
            defect = _nestedness_defect(h2.row_basis)
            if defect > 1e-12:
                print(f"verify: nestedness defect {defect:.3e} exceeds 1e-12",
                      file=sys.stderr)
                return 1
            if kernel.is_spd:
                asym = np.abs(approx - approx.T).max()
                if asym > 1e-12 * max(1.0, np.abs(approx).max()):
                    print(f"verify: symmetry defect {asym:.3e}", file=sys.stderr)
                    return 1
        else:
            print(f"verify: dense oracle disabled for n > {DENSE_ORACLE_MAX_N}",
                  file=sys.stderr)
    row = [args.n, args.kernel, args.kappa, args.order, stats["k"], args.eta,
           args.leaf_size, stats["n_adm"], stats["n_inadm"], stats["c_sp"],
           stats["mem_bytes"], stats["mem_dense_bytes"], t_build, rel_err]
    _emit("build", [row], args.csv)
    return 0


def _nestedness_defect(basis):
    worst = 0.0
    for cluster in basis.tree.clusters:
        if cluster.is_leaf:
            continue
        full = basis.expand(cluster)
        offset = 0
        for son in cluster.sons:
            piece = basis.expand(son) @ basis.transfers[son.id]
            diff = np.abs(full[offset:offset + son.size] - piece).max()
            scale = max(1.0, np.abs(full).max())
            worst = max(worst, diff / scale)
            offset += son.size
    return worst


def cmd_matvec_bench(args):
    rows = []
    for n in args.n:
        kernel, cloud, h2, _ = _build_operator(args, n)
        rng = np.random.default_rng(args.seed)
        x = _random_block(rng, n, 1, kernel.dtype == np.complex128)
        y = np.zeros_like(x)
        mem = h2.memory_bytes()
        for threads in args.threads:
            hashes = set()

            def run():
                y[...] = 0.0
                addeval_list(1.0, h2, x, y, threads=threads)
                hashes.add(hashlib.sha256(y.tobytes()).hexdigest())

            t_med = _median_times(run)
            if len(hashes) != 1:
                print("determinism violated: output hash changed between "
                      "repetitions", file=sys.stderr)
                return 1
            gbps = (mem + x.nbytes + 2 * y.nbytes) / t_med / 1e9
            verify_err = None
            if args.verify and n <= DENSE_ORACLE_MAX_N:
                dense = densify(h2)
                ref = dense @ x
                scale = np.linalg.norm(dense) * np.linalg.norm(x)
                verify_err = float(np.linalg.norm(y - ref) / scale)
                if verify_err > 1e-12:
                    print(f"verify: matvec error {verify_err:.3e} exceeds "
                          "1e-12 (Frobenius-scaled)", file=sys.stderr)
                    return 1
            rows.append([n, args.kernel, args.kappa, args.order, args.eta,
                         args.leaf_size, threads, BENCH_REPS, t_med, gbps,
                         next(iter(hashes))[:16], verify_err])
    _emit("matvec-bench", rows, args.csv)
    return 0


def cmd_matmat_bench(args):
    rows = []
    for n in args.n:
        kernel, cloud, h2, _ = _build_operator(args, n)
        rng = np.random.default_rng(args.seed)
        complex_valued = kernel.dtype == np.complex128
        mem = h2.memory_bytes()
        xv = _random_block(rng, n, 1, complex_valued)
        yv = np.zeros_like(xv)

        def run_single():
            yv[...] = 0.0
            addeval_list(1.0, h2, xv, yv, threads=args.threads)

        t_matvec = _median_times(run_single)
        for m in args.m:
            x = _random_block(rng, n, m, complex_valued)
            y = np.zeros_like(x)

            def run_block():
                y[...] = 0.0
                addeval_block(1.0, h2, x, y, threads=args.threads)

            t_matmat = _median_times(run_block)
            speedup = (m * t_matvec) / t_matmat
            gbps = (m * mem + x.nbytes + 2 * y.nbytes) / t_matmat / 1e9
            verify_err = None
            if args.verify:
                yc = np.zeros_like(y)
                for i in range(m):
                    addeval_list(1.0, h2, x[:, i], yc[:, i], threads=1)
                norms = np.linalg.norm(yc, axis=0)
                norms[norms == 0.0] = 1.0
                verify_err = float(
                    (np.linalg.norm(y - yc, axis=0) / norms).max())
                if verify_err > 1e-13:
                    print(f"verify: blocked product deviates from column loop "
                          f"by {verify_err:.3e} (> 1e-13)", file=sys.stderr)
                    return 1
            rows.append([n, args.kernel, args.kappa, args.order, args.eta,
                         args.leaf_size, args.threads, m, BENCH_REPS,
                         t_matvec, t_matmat, speedup, gbps, verify_err])
    _emit("matmat-bench", rows, args.csv)
    return 0


def _make_preconditioner(args, h2):
    if args.precond == "none":
        return Preconditioner(h2.shape[0])
    if args.precond == "jacobi":
        return block_jacobi_from_nearfield(h2)
    dense = densify(h2)
    factor = (ic_drop_factor(dense, args.tau) if args.precond == "ic"
              else ilu_drop_factor(dense, args.tau))
    return FactorPreconditioner(factor)


def cmd_solve(args):
    kernel, cloud, h2, _ = _build_operator(args, args.n)
    op = H2Operator(h2, threads=args.threads)
    rng = np.random.default_rng(args.seed)
    x_true = _random_block(rng, args.n, args.m, kernel.dtype == np.complex128)
    b = np.zeros_like(x_true)
    addeval_block(1.0, h2, x_true, b, threads=args.threads)

    m_inv = _make_preconditioner(args, h2)
    opts = SolveOptions(eps_slv=args.eps_slv, restart_len=args.restart,
                        max_iter=args.max_iter, max_restarts=args.max_restarts)
    if args.solver in ("cg", "pcg"):
        x, report = block_pcg(op, m_inv, b, opts=opts)
    else:
        x, report = block_pgmres(op, m_inv, b, opts=opts)

    err = np.linalg.norm(x - x_true, axis=0)
    scale = np.linalg.norm(x_true, axis=0)
    scale[scale == 0.0] = 1.0
    max_rel_error = float((err / scale).max())

    resid = np.array(b, copy=True)
    addeval_block(-1.0, h2, x, resid, threads=args.threads)
    bnorm = np.linalg.norm(b, axis=0)
    bnorm[bnorm == 0.0] = 1.0
    max_true_res = float((np.linalg.norm(resid, axis=0) / bnorm).max())

    row = [args.solver, args.precond, args.n, args.m, args.kernel, args.kappa,
           args.order, args.eta, args.leaf_size, args.eps_slv, args.tau,
           args.restart, args.threads, args.seed, report.iterations_total,
           report.converged_count, max_rel_error, max_true_res,
           report.wall_time, report.t_addmul, report.t_precond, report.t_core]
    _emit("solve", [row], args.csv)
    if args.verify and report.all_converged:
        if max_true_res > 10 * args.eps_slv:
            print(f"verify: true residual {max_true_res:.3e} exceeds "
                  f"10*eps_slv", file=sys.stderr)
            return 1
    if not report.all_converged:
        print(f"non-convergence: {report.m - report.converged_count} of "
              f"{report.m} columns did not reach eps_slv={args.eps_slv}",
              file=sys.stderr)
        return 3
    return 0


# -- argument parsing ---------------------------------------------------------

def _int_list(text):
    try:
        values = [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_common(p, n_as_list=False):
    if n_as_list:
        p.add_argument("--n", type=_int_list, default=[512],
                       help="problem sizes, comma separated")
    else:
        p.add_argument("--n", type=int, default=512, help="problem size")
    p.add_argument("--geometry", choices=["sphere"], default="sphere")
    p.add_argument("--kernel", choices=["laplace", "helmholtz"],
                   default="laplace")
    p.add_argument("--kappa", type=float, default=1.0,
                   help="helmholtz wave number")
    p.add_argument("--order", type=int, default=3,
                   help="interpolation order per axis")
    p.add_argument("--eta", type=float, default=2.0,
                   help="admissibility parameter")
    p.add_argument("--leaf-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=1337)
    p.add_argument("--max-n", type=int, default=65536,
                   help="desk-scale guard on n")
    p.add_argument("--verify", action="store_true",
                   help="cross-check against oracles (n-limited)")
    p.add_argument("--csv", "--out", dest="csv", default=None,
                   help="append CSV rows to this path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="h2krylov",
        description="Compressed kernel matrices, fast products, block solvers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="assemble an operator, print stats")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("matvec-bench", help="time single-vector products")
    _add_common(p, n_as_list=True)
    p.add_argument("--threads", type=_int_list, default=None,
                   help="thread counts, comma separated")
    p.set_defaults(func=cmd_matvec_bench)

    p = sub.add_parser("matmat-bench", help="time blocked products vs m-fold")
    _add_common(p, n_as_list=True)
    p.add_argument("--m", type=_int_list, default=[1, 10, 50, 100],
                   help="column counts, comma separated")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_matmat_bench)

    p = sub.add_parser("solve", help="manufactured-solution solve")
    _add_common(p)
    p.add_argument("--m", type=int, default=8, help="number of right-hand sides")
    p.add_argument("--eps-slv", type=float, default=1e-6,
                   help="relative solver tolerance")
    p.add_argument("--tau", type=float, default=1e-2,
                   help="factorization drop tolerance")
    p.add_argument("--solver", choices=["cg", "pcg", "gmres", "pgmres"],
                   default="pcg")
    p.add_argument("--precond", choices=["none", "jacobi", "ic", "ilu"],
                   default="none")
    p.add_argument("--restart", type=int, default=30, help="GMRES restart length")
    p.add_argument("--max-iter", type=int, default=500,
                   help="iteration cap (cg/pcg)")
    p.add_argument("--max-restarts", type=int, default=20,
                   help="restart cap (gmres/pgmres)")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_solve)
    return parser


def _resolve_threads(value):
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                pass
        return 1
    return value


def validate_args(args):
    ns = args.n if isinstance(args.n, list) else [args.n]
    for n in ns:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if n > args.max_n:
            raise ValueError(f"n={n} exceeds desk-scale cap --max-n={args.max_n}")
    if args.order < 1:
        raise ValueError("order must be >= 1")
    if not args.eta > 0:
        raise ValueError("eta must be positive")
    if args.leaf_size < 1:
        raise ValueError("leaf-size must be >= 1")
    if args.seed < 0:
        raise ValueError("seed must be nonnegative")
    if hasattr(args, "threads"):
        if args.command == "matvec-bench":
            if args.threads is None:
                args.threads = [_resolve_threads(None)]
            if any(t < 1 for t in args.threads):
                raise ValueError("threads must be >= 1")
        else:
            args.threads = _resolve_threads(args.threads)
            if args.threads < 1:
                raise ValueError("threads must be >= 1")
    if getattr(args, "m", None) is not None:
        ms = args.m if isinstance(args.m, list) else [args.m]
        for m in ms:
            if m < 1:
                raise ValueError(f"m must be >= 1, got {m}")
    if hasattr(args, "eps_slv") and not args.eps_slv > 0:
        raise ValueError("eps-slv must be positive")
    if hasattr(args, "tau") and args.tau < 0:
        raise ValueError("tau must be >= 0")
    if hasattr(args, "restart") and args.restart < 1:
        raise ValueError("restart must be >= 1")
    if hasattr(args, "max_iter") and args.max_iter < 1:
        raise ValueError("max-iter must be >= 1")
    if hasattr(args, "max_restarts") and args.max_restarts < 0:
        raise ValueError("max-restarts must be >= 0")
    if getattr(args, "solver", None) in ("cg", "pcg"):
        if args.kernel != "laplace":
            raise ValueError(
                f"solver {args.solver!r} requires the SPD laplace kernel; "
                "use gmres or pgmres for helmholtz"
            )
    if getattr(args, "solver", None) in ("cg", "gmres"):
        if args.precond != "none":
            raise ValueError(
                f"solver {args.solver!r} is unpreconditioned; "
                f"use p{args.solver} to apply precond={args.precond!r}"
            )
    if getattr(args, "precond", None) in ("ic", "ilu"):
        if args.n > DENSE_ORACLE_MAX_N:
            raise ValueError(
                f"precond {args.precond!r} factors a dense matrix; "
                f"n is capped at {DENSE_ORACLE_MAX_N}"
            )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        validate_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (BreakdownError, FactorizationError, ContractError,
            DimensionMismatchError, EmptyInputError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
