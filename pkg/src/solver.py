"""
Newton-Raphson with incremental loading, and Jacobi-preconditioned CG.

Dirichlet values are ramped linearly with the load factor λ.  A load step
that fails (no convergence, an inverted element, or a CG breakdown) is
retried from the last converged state with half the increment; after a
success the increment grows back towards ``1 / load_steps``.
"""

from __future__ import annotations

import logging
import time

import numpy as np
import scipy.sparse as sp

from .assembly import DirichletEliminator, assemble, build_pattern, worker_batches
from .constants import DEFAULT_FE_BATCH, QP_PER_ELEMENT
from .errors import CgBreakdownError, ConvergenceError, ElementInversionError
from .mesh import prescribed_displacement
from .models import (
    AssemblyTimings,
    CgConfig,
    CgResult,
    FeModel,
    FloatArray,
    MaterialBatch,
    NcmDefinition,
    NewtonConfig,
    SolveReport,
)

logger = logging.getLogger(__name__)

_LAMBDA_TOL = 1e-12


# ── Conjugate gradients ──────────────────────────────────────────────────────


def cg_jacobi(k: sp.csr_matrix, b: FloatArray, cfg: CgConfig | None = None) -> CgResult:
    """Solve ``K x = b`` for SPD ``K`` with diagonal (Jacobi) preconditioning.

    Stops when ``‖b - K x‖ ≤ rel_tol ‖b‖``.  On hitting ``max_iterations`` the
    iterate with the smallest residual so far is returned with
    ``converged=False``.
    """
    cfg = cfg or CgConfig()
    diag = k.diagonal()
    if np.any(diag <= 0.0):
        row = int(np.flatnonzero(diag <= 0.0)[0])
        raise CgBreakdownError(f"non-positive diagonal entry {diag[row]:.3e} in row {row}")
    inv_diag = 1.0 / diag

    x = np.zeros_like(b)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CgResult(x=x, iterations=0, converged=True, residual_norm=0.0)
    tol = cfg.rel_tol * b_norm

    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    best_x, best_norm = x.copy(), b_norm
    for it in range(1, cfg.max_iterations + 1):
        kp = k @ p
        pkp = float(p @ kp)
        if pkp <= 0.0:
            raise CgBreakdownError(f"non-positive curvature p·Kp = {pkp:.3e} at iteration {it}")
        alpha = rz / pkp
        x = x + alpha * p
        r = r - alpha * kp
        r_norm = float(np.linalg.norm(r))
        if r_norm < best_norm:
            best_x, best_norm = x.copy(), r_norm
        if r_norm <= tol:
            return CgResult(x=x, iterations=it, converged=True, residual_norm=r_norm)
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    logger.warning(
        "CG did not converge in %d iterations (residual %.3e, target %.3e)",
        cfg.max_iterations,
        best_norm,
        tol,
    )
    return CgResult(x=best_x, iterations=cfg.max_iterations, converged=False, residual_norm=best_norm)


# ── Newton ───────────────────────────────────────────────────────────────────


class _StepFailed(Exception):
    def __init__(self, reason: str, inversion: ElementInversionError | None = None) -> None:
        super().__init__(reason)
        self.inversion = inversion


def newton_solve(
    model: NcmDefinition,
    fe: FeModel,
    ncfg: NewtonConfig | None = None,
    ccfg: CgConfig | None = None,
    assembly: str = "batch",
    n_batch: int = DEFAULT_FE_BATCH,
    n_workers: int = 1,
    raise_on_failure: bool = True,
) -> tuple[FloatArray, SolveReport]:
    """Drive the load factor from 0 to 1 and return the final displacement and report.

    When retries run out the inversion (if that was the last failure) or a
    :class:`ConvergenceError` is raised; with ``raise_on_failure=False`` the
    last converged state is returned with ``report.converged`` False.

    The Newton iteration count of a step is the number of assemblies it
    performs.  A step converges when ``‖r_free‖ ≤ max(abs_tol, rel_tol * ρ)``
    with ``ρ`` the free residual norm after the step's first update and no
    prescribed increment left.
    """
    ncfg = ncfg or NewtonConfig()
    ccfg = ccfg or CgConfig()
    report = SolveReport()
    t_start = time.perf_counter_ns()

    pattern = build_pattern(fe)
    eliminator = DirichletEliminator(pattern, fe.dofmap)
    if assembly == "global":
        n_batch = fe.mesh.n_elements * QP_PER_ELEMENT
    batch = MaterialBatch(n_batch) if assembly in ("batch", "global") else None
    batches = worker_batches(fe, n_batch, n_workers) if assembly == "partitioned" else None
    constrained, free = fe.dofmap.constrained, fe.dofmap.free

    d = np.zeros(fe.dofmap.n_dofs)
    lam = 0.0
    nominal = 1.0 / ncfg.load_steps
    step = nominal
    halvings_in_row = 0

    def run_step(target_lam: float) -> tuple[FloatArray, list[float], int]:
        target = prescribed_displacement(fe.mesh, fe.dofmap, target_lam)
        trial = d.copy()
        history: list[float] = []
        ref: float | None = None
        updated = False
        for assemblies in range(1, ncfg.max_iterations + 1):
            timings = AssemblyTimings()
            try:
                k, r = assemble(
                    model,
                    fe,
                    trial,
                    assembly,
                    n_batch=n_batch,
                    n_workers=n_workers,
                    pattern=pattern,
                    load_factor=target_lam,
                    timings=timings,
                    batch=batch,
                    batches=batches,
                )
            except ElementInversionError as exc:
                raise _StepFailed(str(exc), inversion=exc) from exc
            finally:
                report.constitutive_ns += timings.constitutive_ns
                report.assembly_other_ns += timings.other_ns
            report.max_trace_c = max(report.max_trace_c, timings.max_trace_c)

            increment = target[constrained] - trial[constrained]
            r_norm = float(np.linalg.norm(r[free]))
            history.append(r_norm)
            if updated and ref is None:
                ref = r_norm
            tol = max(ncfg.abs_tol, ncfg.rel_tol * ref) if ref is not None else ncfg.abs_tol
            logger.debug("lambda=%.4f iteration %d: |r_free| = %.3e", target_lam, assemblies, r_norm)
            if not np.isfinite(r_norm):
                raise _StepFailed(f"non-finite residual at lambda={target_lam:.4f}")
            if not np.any(increment) and r_norm <= tol:
                return trial, history, assemblies

            a, rhs = eliminator.apply(k, r, increment)
            t0 = time.perf_counter_ns()
            try:
                cg = cg_jacobi(a, rhs, ccfg)
            except CgBreakdownError as exc:
                raise _StepFailed(str(exc)) from exc
            finally:
                report.linear_solve_ns += time.perf_counter_ns() - t0
            report.cg_iterations += cg.iterations
            logger.debug("CG: %d iterations, converged=%s", cg.iterations, cg.converged)
            trial = trial + cg.x
            trial[constrained] = target[constrained]
            updated = True
        raise _StepFailed(
            f"no convergence in {ncfg.max_iterations} iterations at lambda={target_lam:.4f} "
            f"(|r_free| = {history[-1]:.3e})"
        )

    while lam < 1.0:
        target_lam = lam + step
        if target_lam > 1.0 - _LAMBDA_TOL:
            target_lam = 1.0
        try:
            d_new, history, assemblies = run_step(target_lam)
        except _StepFailed as failure:
            halvings_in_row += 1
            report.halvings += 1
            if halvings_in_row > ncfg.max_halvings:
                report.total_ns = time.perf_counter_ns() - t_start
                report.final_load_factor = lam
                report.message = str(failure)
                if not raise_on_failure:
                    logger.warning("solve stopped at lambda=%.4f: %s", lam, failure)
                    return d, report
                if failure.inversion is not None:
                    raise failure.inversion from None
                raise ConvergenceError(
                    f"load step failed after {ncfg.max_halvings} halvings: {failure}", load_factor=lam
                ) from None
            step *= 0.5
            logger.warning("load step to lambda=%.4f failed (%s); halving to %.4g", target_lam, failure, step)
            continue

        d = d_new
        lam = target_lam
        halvings_in_row = 0
        report.load_steps += 1
        report.newton_iterations += assemblies
        report.residual_histories.append(history)
        step = min(nominal, 2.0 * step)
        logger.info(
            "load step %d: lambda=%.4f converged in %d iterations (|r_free| = %.3e)",
            report.load_steps,
            lam,
            assemblies,
            history[-1],
        )

    report.converged = True
    report.final_load_factor = lam
    report.total_ns = time.perf_counter_ns() - t_start
    report.message = "converged"
    return d, report
