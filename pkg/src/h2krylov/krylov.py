"""Blocked Krylov solvers for many right-hand sides sharing one matrix.

Each right-hand side keeps its own Krylov subspace and its own scalar
recurrences; blocking only groups the expensive operator and preconditioner
applications into matrix-matrix shaped calls. Per-column scalars live in
length-m vectors, per-column Hessenberg matrices in one contiguous
(l+1, l, m) array. Stopping is all-converge: the block keeps iterating
until every column meets the tolerance, each column's iteration count is
recorded at its own first crossing, and columns that have finished are
frozen so they match the standalone single-system solve.

Solvers report a time breakdown: operator applications (addmul),
preconditioner applications, and the remainder (solver core).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .apply import addeval_block
from .dense import make_givens, upper_tri_solve
from .errors import BreakdownError, DimensionMismatchError, SingularTriangularError

CG_BREAKDOWN_TINY = 1e-300
HAPPY_BREAKDOWN_REL = 1e-14
STAGNATION_REL = 1e-14


class DenseOperator:
    """Wraps a dense matrix as y += alpha * A @ x."""

    def __init__(self, a):
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError("operator matrix must be square")
        self.a = a
        self.n = a.shape[0]
        self.dtype = a.dtype

    def apply(self, alpha, x, y):
        update = self.a @ x
        if alpha != 1:
            update *= alpha
        y += update
        return y


class H2Operator:
    """Wraps a compressed kernel matrix; products run the blocked fast path."""

    def __init__(self, h2, threads=1):
        self.h2 = h2
        self.threads = threads
        self.n = h2.shape[0]
        self.dtype = h2.dtype

    @property
    def is_spd(self):
        return self.h2.kernel.is_spd

    def apply(self, alpha, x, y):
        return addeval_block(alpha, self.h2, x, y, threads=self.threads)


def as_operator(a):
    if hasattr(a, "apply") and hasattr(a, "n"):
        return a
    if hasattr(a, "block_tree"):
        return H2Operator(a)
    return DenseOperator(a)


@dataclass
class SolveOptions:
    """Tolerances and limits shared by all solvers."""

    eps_slv: float = 1e-8
    max_iter: int = 500
    restart_len: int = 30
    max_restarts: int = 20
    stop_rule: str = "all-converge"
    reorthogonalize: bool = False
    workspace_cap_bytes: int = 1 << 30
    # Diagnostics: called once per GMRES restart cycle with a snapshot dict
    # (cycle, steps, basis, hess, raw_hess, res_abs, eligible, happy).
    cycle_observer: object = None

    def __post_init__(self):
        if self.eps_slv <= 0:
            raise ValueError("eps_slv must be positive")
        if self.restart_len < 1:
            raise ValueError("restart_len must be >= 1")
        if self.stop_rule != "all-converge":
            raise ValueError(f"unknown stop rule: {self.stop_rule!r}")


@dataclass
class SolveReport:
    """Per-column convergence data plus wall-time breakdown."""

    solver: str
    n: int
    m: int
    eps_slv: float
    iterations: np.ndarray  # per column, first crossing (or total if never)
    residuals: np.ndarray  # per column, relative, recurrence/preconditioned
    converged: np.ndarray  # per column
    failed: np.ndarray  # per column breakdown flags
    stagnated: np.ndarray  # per column
    true_residuals: np.ndarray | None = None
    wall_time: float = 0.0
    t_addmul: float = 0.0
    t_precond: float = 0.0
    restarts: int = 0

    @property
    def iterations_total(self):
        return int(self.iterations.max()) if self.iterations.size else 0

    @property
    def converged_count(self):
        return int(self.converged.sum())

    @property
    def all_converged(self):
        return bool(self.converged.all())

    @property
    def t_core(self):
        return max(self.wall_time - self.t_addmul - self.t_precond, 0.0)


class _Timers:
    __slots__ = ("addmul", "precond")

    def __init__(self):
        self.addmul = 0.0
        self.precond = 0.0

    def apply_op(self, op, alpha, x, y):
        t0 = time.perf_counter()
        op.apply(alpha, x, y)
        self.addmul += time.perf_counter() - t0
        return y

    def apply_minv(self, m_inv, r):
        t0 = time.perf_counter()
        out = m_inv.apply_inverse(r)
        self.precond += time.perf_counter() - t0
        return out


def _as_block(v, n, name):
    arr = np.asarray(v)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise DimensionMismatchError(
            f"{name} must have {n} rows, got shape {np.asarray(v).shape}"
        )
    return arr


def _column_norms(a):
    return np.array([np.linalg.norm(a[:, i]) for i in range(a.shape[1])])


# -- conjugate gradients ------------------------------------------------------

def _pcg_engine(op, m_inv, b, x0, opts):
    """Blocked preconditioned CG. Per-column recurrences, blocked applies.

    Per iteration: a = A p; beta_i = <p_i, a_i>; alpha_i = <p_i, r_i>/beta_i;
    x += alpha p; r -= alpha a; q = M^{-1} r; gamma_i = <a_i, q_i>/beta_i;
    p = q - gamma p. With the identity preconditioner q equals r and the
    recurrence is plain CG.

    Converged and broken-down columns are frozen (alpha = gamma = 0), so a
    column of the blocked solve reproduces the standalone single-system
    solve while the remaining columns keep iterating in lockstep.
    """
    timers = _Timers()
    t_start = time.perf_counter()
    n, m = b.shape
    dtype = np.result_type(op.dtype, b.dtype, x0.dtype,
                           m_inv.result_dtype(np.result_type(op.dtype, b.dtype)))
    x = np.array(x0, dtype=dtype, order="F", copy=True)
    r = np.array(b, dtype=dtype, order="F", copy=True)
    if np.any(x0):
        timers.apply_op(op, -1.0, x, r)
    denom = _column_norms(b)
    denom[denom == 0.0] = 1.0

    converged = np.zeros(m, dtype=bool)
    failed = np.zeros(m, dtype=bool)
    iterations = np.zeros(m, dtype=np.int64)
    final_res = np.empty(m, dtype=np.float64)

    res = _column_norms(r) / denom
    final_res[:] = res
    converged[res <= opts.eps_slv] = True

    q = timers.apply_minv(m_inv, r)
    p = np.array(q, dtype=dtype, order="F", copy=True)
    a = np.zeros((n, m), dtype=dtype, order="F")
    alpha = np.zeros(m, dtype=dtype)
    beta = np.zeros(m, dtype=dtype)
    gamma = np.zeros(m, dtype=dtype)

    it = 0
    while it < opts.max_iter and not np.all(converged | failed):
        a[...] = 0.0
        timers.apply_op(op, 1.0, p, a)
        for i in range(m):
            beta[i] = np.vdot(p[:, i], a[:, i])
        bad = ~np.isfinite(beta) | (beta.real <= 0.0) | (np.abs(beta) < CG_BREAKDOWN_TINY)
        newly_bad = bad & ~failed & ~converged
        if newly_bad.any():
            failed[newly_bad] = True
            iterations[newly_bad] = it
        halt = (converged | failed
                | ~np.isfinite(beta) | (np.abs(beta) < CG_BREAKDOWN_TINY))
        for i in range(m):
            alpha[i] = 0.0 if halt[i] else np.vdot(p[:, i], r[:, i]) / beta[i]
        x += p * alpha
        r -= a * alpha
        q = timers.apply_minv(m_inv, r)
        for i in range(m):
            gamma[i] = 0.0 if halt[i] else np.vdot(a[:, i], q[:, i]) / beta[i]
        p *= -gamma
        p += q
        it += 1
        for i in range(m):
            if converged[i] or failed[i]:
                continue
            rel = np.linalg.norm(r[:, i]) / denom[i]
            if rel <= opts.eps_slv:
                converged[i] = True
                iterations[i] = it
                final_res[i] = rel

    for i in range(m):
        if not converged[i] and not failed[i]:
            iterations[i] = it
            final_res[i] = np.linalg.norm(r[:, i]) / denom[i]
    report = SolveReport(
        solver="pcg" if m_inv.kind != "identity" else "cg",
        n=n, m=m, eps_slv=opts.eps_slv,
        iterations=iterations, residuals=final_res,
        converged=converged, failed=failed,
        stagnated=np.zeros(m, dtype=bool),
        wall_time=time.perf_counter() - t_start,
        t_addmul=timers.addmul, t_precond=timers.precond,
    )
    return x, report


def cg_solve(a, b, x0=None, opts=None):
    """Conjugate gradients for one SPD system; raises on breakdown."""
    from .precond import Preconditioner

    op = as_operator(a)
    opts = opts or SolveOptions()
    b2 = _as_block(b, op.n, "b")
    x0_2 = (np.zeros_like(b2) if x0 is None else _as_block(x0, op.n, "x0"))
    x, report = _pcg_engine(op, Preconditioner(op.n), b2, x0_2, opts)
    if report.failed.any():
        raise BreakdownError(
            f"cg breakdown at iteration {int(report.iterations[0])}: "
            "operator is not positive definite on the Krylov space"
        )
    return (x[:, 0] if np.asarray(b).ndim == 1 else x), report


def block_pcg(a, m_inv, b, x0=None, opts=None):
    """Blocked preconditioned CG; failed columns are flagged, not raised."""
    from .precond import Preconditioner

    op = as_operator(a)
    opts = opts or SolveOptions()
    if m_inv is None:
        m_inv = Preconditioner(op.n)
    b2 = _as_block(b, op.n, "b")
    x0_2 = (np.zeros_like(b2) if x0 is None else _as_block(x0, op.n, "x0"))
    x, report = _pcg_engine(op, m_inv, b2, x0_2, opts)
    return (x[:, 0] if np.asarray(b).ndim == 1 else x), report


# -- GMRES --------------------------------------------------------------------

def _pgmres_engine(op, m_inv, b, x0, opts):
    """Blocked left-preconditioned restarted GMRES.

    One blocked M^{-1}A application per step; Arnoldi with modified
    Gram-Schmidt, per-column Givens rotations and Hessenberg columns.
    Convergence is measured on the preconditioned residual surrogate
    |rhat_{k+1}| relative to ||M^{-1} b||.

    A column that converges stops extending its Krylov space and its
    solution update uses exactly the steps it ran, so blocked columns
    reproduce standalone single-system solves while the rest of the block
    keeps iterating in lockstep.
    """
    timers = _Timers()
    t_start = time.perf_counter()
    n, m = b.shape
    ell = opts.restart_len
    dtype = np.result_type(op.dtype, b.dtype, x0.dtype,
                           m_inv.result_dtype(np.result_type(op.dtype, b.dtype)))
    x = np.array(x0, dtype=dtype, order="F", copy=True)

    zb = timers.apply_minv(m_inv, np.array(b, dtype=dtype))
    denom = _column_norms(zb)
    denom[denom == 0.0] = 1.0
    bnorm = _column_norms(b)
    bnorm[bnorm == 0.0] = 1.0
    x0_zero = not np.any(x0)

    basis = np.zeros((ell + 1, n, m), dtype=dtype)
    hess = np.zeros((ell + 1, ell, m), dtype=dtype)
    givens_c = np.zeros((ell, m), dtype=np.float64)
    givens_s = np.zeros((ell, m), dtype=dtype)
    rhat = np.zeros((ell + 1, m), dtype=dtype)

    converged = np.zeros(m, dtype=bool)
    failed = np.zeros(m, dtype=bool)
    stagnated = np.zeros(m, dtype=bool)
    iterations = np.zeros(m, dtype=np.int64)
    final_res = np.zeros(m, dtype=np.float64)
    total_steps = 0
    restarts_done = 0

    for cycle in range(opts.max_restarts + 1):
        if cycle == 0 and x0_zero:
            z = zb
        else:
            resid = np.array(b, dtype=dtype, order="F", copy=True)
            timers.apply_op(op, -1.0, x, resid)
            z = timers.apply_minv(m_inv, resid)
        beta0 = _column_norms(z)
        rel0 = beta0 / denom
        if cycle == 0:
            final_res[:] = rel0
        newly = ~converged & ~failed & (rel0 <= opts.eps_slv)
        if newly.any():
            converged[newly] = True
            iterations[newly] = total_steps
            final_res[newly] = rel0[newly]
        if np.all(converged | failed | stagnated):
            break

        eligible = ~converged & ~failed
        basis[...] = 0.0
        hess[...] = 0.0
        rhat[...] = 0.0
        happy = np.full(m, -1, dtype=np.int64)
        crossed = np.full(m, -1, dtype=np.int64)
        res_abs = np.full((ell + 1, m), np.nan)
        raw_hess = None
        if opts.cycle_observer is not None:
            raw_hess = np.zeros((ell + 1, ell, m), dtype=dtype)
        for i in range(m):
            if eligible[i]:
                basis[0, :, i] = z[:, i] / beta0[i]
                rhat[0, i] = beta0[i]
                res_abs[0, i] = beta0[i]

        steps = 0
        work = np.zeros((n, m), dtype=dtype)
        for k in range(ell):
            work[...] = 0.0
            timers.apply_op(op, 1.0, basis[k], work)
            w_all = timers.apply_minv(m_inv, work)
            for i in range(m):
                if (not eligible[i] or crossed[i] >= 0
                        or (happy[i] >= 0 and happy[i] <= k)):
                    continue
                w = w_all[:, i]
                scale = np.linalg.norm(w)
                for j in range(k + 1):
                    h = np.vdot(basis[j, :, i], w)
                    hess[j, k, i] = h
                    w -= h * basis[j, :, i]
                if opts.reorthogonalize:
                    for j in range(k + 1):
                        h2 = np.vdot(basis[j, :, i], w)
                        hess[j, k, i] += h2
                        w -= h2 * basis[j, :, i]
                hk1 = np.linalg.norm(w)
                if hk1 <= HAPPY_BREAKDOWN_REL * scale or scale == 0.0:
                    hess[k + 1, k, i] = 0.0
                    happy[i] = k + 1
                else:
                    hess[k + 1, k, i] = hk1
                    basis[k + 1, :, i] = w / hk1
                if raw_hess is not None:
                    raw_hess[:k + 2, k, i] = hess[:k + 2, k, i]
                for j in range(k):
                    hess[j, k, i], hess[j + 1, k, i] = _rot_apply(
                        givens_c[j, i], givens_s[j, i],
                        hess[j, k, i], hess[j + 1, k, i])
                rot = make_givens(hess[k, k, i], hess[k + 1, k, i])
                givens_c[k, i] = rot.c
                givens_s[k, i] = rot.s
                hess[k, k, i] = rot.r
                hess[k + 1, k, i] = 0.0
                rhat[k + 1, i] = -np.conj(rot.s) * rhat[k, i]
                rhat[k, i] = rot.c * rhat[k, i]
                res_abs[k + 1, i] = abs(rhat[k + 1, i])
                rel = abs(rhat[k + 1, i]) / denom[i]
                if not converged[i] and rel <= opts.eps_slv:
                    converged[i] = True
                    crossed[i] = k + 1
                    iterations[i] = total_steps + k + 1
                    final_res[i] = rel
            steps = k + 1
            if np.all(converged | failed | (happy >= 0)):
                break

        cycle_end = np.zeros(m, dtype=np.float64)
        for i in range(m):
            if not eligible[i]:
                continue
            if crossed[i] >= 0:
                ksol = crossed[i]
            elif happy[i] >= 0:
                ksol = happy[i]
            else:
                ksol = steps
            if ksol > 0:
                try:
                    y = upper_tri_solve(hess[:ksol, :ksol, i], rhat[:ksol, i])
                except SingularTriangularError:
                    failed[i] = True
                    iterations[i] = total_steps + steps
                    continue
                x[:, i] += np.tensordot(y, basis[:ksol, :, i], axes=(0, 0))
            cycle_end[i] = abs(rhat[ksol, i])
        total_steps += steps
        if opts.cycle_observer is not None:
            opts.cycle_observer({
                "cycle": cycle,
                "steps": steps,
                "basis": basis[:steps + 1].copy(),
                "hess": hess[:steps + 1, :steps].copy(),
                "raw_hess": raw_hess[:steps + 1, :steps].copy(),
                "res_abs": res_abs[:steps + 1].copy(),
                "eligible": eligible.copy(),
                "happy": happy.copy(),
            })

        if np.all(converged):
            break
        active = ~converged & ~failed
        if active.any():
            no_progress = cycle_end[active] > (1.0 - STAGNATION_REL) * beta0[active]
            if no_progress.all() and steps == ell:
                stagnated[active] = True
                iterations[np.flatnonzero(active)] = total_steps
                final_res[np.flatnonzero(active)] = cycle_end[active] / denom[active]
                break
        if cycle < opts.max_restarts:
            restarts_done += 1

    for i in range(m):
        if not converged[i] and not failed[i] and not stagnated[i]:
            iterations[i] = total_steps
    # one true-residual evaluation at exit, reported alongside
    resid = np.array(b, dtype=dtype, order="F", copy=True)
    timers.apply_op(op, -1.0, x, resid)
    true_res = _column_norms(resid) / bnorm
    for i in range(m):
        if not converged[i] and not failed[i] and not stagnated[i]:
            final_res[i] = true_res[i]

    report = SolveReport(
        solver="pgmres" if m_inv.kind != "identity" else "gmres",
        n=n, m=m, eps_slv=opts.eps_slv,
        iterations=iterations, residuals=final_res,
        converged=converged, failed=failed, stagnated=stagnated,
        true_residuals=true_res,
        wall_time=time.perf_counter() - t_start,
        t_addmul=timers.addmul, t_precond=timers.precond,
        restarts=restarts_done,
    )
    return x, report


def _rot_apply(c, s, a, b):
    return c * a + s * b, -np.conj(s) * a + c * b


def gmres_solve(a, m_inv, b, x0=None, opts=None):
    """Restarted GMRES for one system, optionally left preconditioned."""
    from .precond import Preconditioner

    op = as_operator(a)
    opts = opts or SolveOptions()
    if m_inv is None:
        m_inv = Preconditioner(op.n)
    b2 = _as_block(b, op.n, "b")
    x0_2 = (np.zeros_like(b2) if x0 is None else _as_block(x0, op.n, "x0"))
    x, report = _pgmres_engine(op, m_inv, b2, x0_2, opts)
    return (x[:, 0] if np.asarray(b).ndim == 1 else x), report


def block_pgmres(a, m_inv, b, x0=None, opts=None):
    """Blocked preconditioned GMRES with a workspace memory guard.

    If the Arnoldi basis for all m columns would exceed
    opts.workspace_cap_bytes, columns are split into chunks solved one
    after the other, as the blocked memory footprint n*(l+1)*m suggests.
    """
    from .precond import Preconditioner

    op = as_operator(a)
    opts = opts or SolveOptions()
    if m_inv is None:
        m_inv = Preconditioner(op.n)
    b2 = _as_block(b, op.n, "b")
    x0_2 = (np.zeros_like(b2) if x0 is None else _as_block(x0, op.n, "x0"))
    m = b2.shape[1]
    dtype = np.result_type(op.dtype, b2.dtype)
    per_col = (opts.restart_len + 1) * op.n * np.dtype(dtype).itemsize
    m_chunk = max(1, int(opts.workspace_cap_bytes // max(per_col, 1)))
    if m_chunk >= m:
        x, report = _pgmres_engine(op, m_inv, b2, x0_2, opts)
    else:
        xs, reports = [], []
        for lo in range(0, m, m_chunk):
            hi = min(lo + m_chunk, m)
            xc, rc = _pgmres_engine(op, m_inv, b2[:, lo:hi], x0_2[:, lo:hi], opts)
            xs.append(xc)
            reports.append(rc)
        x = np.hstack(xs)
        report = _merge_reports(reports)
    return (x[:, 0] if np.asarray(b).ndim == 1 else x), report


def _merge_reports(reports):
    first = reports[0]
    return SolveReport(
        solver=first.solver,
        n=first.n,
        m=sum(r.m for r in reports),
        eps_slv=first.eps_slv,
        iterations=np.concatenate([r.iterations for r in reports]),
        residuals=np.concatenate([r.residuals for r in reports]),
        converged=np.concatenate([r.converged for r in reports]),
        failed=np.concatenate([r.failed for r in reports]),
        stagnated=np.concatenate([r.stagnated for r in reports]),
        true_residuals=np.concatenate([r.true_residuals for r in reports]),
        wall_time=sum(r.wall_time for r in reports),
        t_addmul=sum(r.t_addmul for r in reports),
        t_precond=sum(r.t_precond for r in reports),
        restarts=max(r.restarts for r in reports),
    )
