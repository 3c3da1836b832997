"""
Global stiffness and residual assembly for hex8 meshes.

Four drivers produce the same ``(K, r)``:

- ``assemble_traditional``: one constitutive call per quadrature point.
- ``assemble_global_vectorized``: one call over every quadrature point.
- ``assemble_batch_vectorized``: runs of ``n_batch`` quadrature points
  through one reused :class:`MaterialBatch`.
- ``assemble_partitioned``: contiguous element ranges on a thread pool, each
  running the batch driver into private buffers, merged in element order.

All four feed identical per-point constitutive results into
:func:`element_contribution` and scatter the element blocks in element
order, so their outputs agree bit for bit.

Spatial shape gradients are ``grad φ = Grad φ · F⁻¹``; the reference
gradients come from the :class:`QuadCache`.  The residual is
``r = f_int - f_ext`` with dead tractions scaled by the load factor.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .constants import DOFS_PER_ELEMENT, DOFS_PER_NODE, QP_PER_ELEMENT
from .constitutive import eval_batch, eval_point
from .errors import BatchEvaluationError, ElementInversionError, NcmFeError
from .mesh import traction_load
from .models import (
    AssemblyTimings,
    DofMap,
    FeModel,
    FloatArray,
    IntArray,
    MaterialBatch,
    NcmDefinition,
)
from .tensors import from_voigt, inv3, stiffness_to_full

logger = logging.getLogger(__name__)

_EYE3 = np.eye(3)
_GEOMETRIC = _EYE3[None, :, None, :]

ElementSink = Callable[[int, FloatArray, FloatArray], None]


# ── Sparsity pattern ─────────────────────────────────────────────────────────


@dataclass
class SparsityPattern:
    """CSR structure of K plus, per element, the data slot of every ``ke`` entry.

    ``slots[e]`` is ``(24 * 24,)`` in row-major ``ke`` order; ``element_dofs[e]``
    lists the element's 24 global DOFs (node-major, direction-minor).
    """

    indptr: IntArray
    indices: IntArray
    slots: IntArray
    element_dofs: IntArray
    n_dofs: int

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def new_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.zeros(self.nnz), self.indices.copy(), self.indptr.copy()),
            shape=(self.n_dofs, self.n_dofs),
        )

    def slot_of(self, rows: IntArray, cols: IntArray) -> IntArray:
        keys = self._row_of_slot() * self.n_dofs + self.indices
        return np.searchsorted(keys, rows * self.n_dofs + cols)

    def _row_of_slot(self) -> IntArray:
        return np.repeat(np.arange(self.n_dofs, dtype=np.intp), np.diff(self.indptr))


def element_dofs(elements: IntArray) -> IntArray:
    return (DOFS_PER_NODE * elements[:, :, None] + np.arange(DOFS_PER_NODE)).reshape(
        elements.shape[0], DOFS_PER_ELEMENT
    )


def build_pattern(fe: FeModel) -> SparsityPattern:
    """Allocate the symmetric CSR pattern once from connectivity."""
    n = fe.dofmap.n_dofs
    edofs = element_dofs(fe.mesh.elements)
    n_el = edofs.shape[0]
    rows = np.broadcast_to(edofs[:, :, None], (n_el, DOFS_PER_ELEMENT, DOFS_PER_ELEMENT)).ravel()
    cols = np.broadcast_to(edofs[:, None, :], (n_el, DOFS_PER_ELEMENT, DOFS_PER_ELEMENT)).ravel()
    coo = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    csr = coo.tocsr()
    csr.sum_duplicates()
    csr.sort_indices()
    pattern = SparsityPattern(
        indptr=csr.indptr.astype(np.intp),
        indices=csr.indices.astype(np.intp),
        slots=np.empty(0, dtype=np.intp),
        element_dofs=edofs,
        n_dofs=n,
    )
    pattern.slots = pattern.slot_of(rows, cols).reshape(n_el, DOFS_PER_ELEMENT * DOFS_PER_ELEMENT)
    logger.debug("sparsity pattern: %d DOFs, %d stored entries", n, pattern.nnz)
    return pattern


# ── Trial deformation gradients ──────────────────────────────────────────────


def _nodal(u: FloatArray, n_nodes: int) -> FloatArray:
    if u.shape != (DOFS_PER_NODE * n_nodes,):
        raise ValueError(f"displacement vector has shape {u.shape}, expected ({DOFS_PER_NODE * n_nodes},)")
    return u.reshape(n_nodes, DOFS_PER_NODE)


def trial_F_block(fe: FeModel, u_nodes: FloatArray, start: int, stop: int) -> FloatArray:
    """``F = I + Σ_I u^I ⊗ Grad φ^I`` for global quadrature points ``start..stop``.

    Quadrature point ``g`` is point ``g % 8`` of element ``g // 8``.
    """
    idx = np.arange(start, stop)
    el, qp = idx // QP_PER_ELEMENT, idx % QP_PER_ELEMENT
    ue = u_nodes[fe.mesh.elements[el]]  # (k, 8, 3)
    grad = fe.cache.grad[el, qp]  # (k, 8, 3)
    f = np.zeros((idx.size, 3, 3))
    for node in range(ue.shape[1]):
        f = f + ue[:, node, :, None] * grad[:, node, None, :]
    return f + _EYE3


def compute_trial_F(fe: FeModel, u: FloatArray, e: int, q: int) -> FloatArray:
    """Deformation gradient at quadrature point ``q`` of element ``e``."""
    g = e * QP_PER_ELEMENT + q
    return trial_F_block(fe, _nodal(u, fe.mesh.n_nodes), g, g + 1)[0]


def max_trace_c(f: FloatArray) -> float:
    """Largest ``tr(C) = Σ F_iJ²`` over a stack of deformation gradients."""
    if f.shape[0] == 0:
        return 0.0
    return float(np.max(np.sum(f * f, axis=(-2, -1))))


# ── Element kernel ───────────────────────────────────────────────────────────


def element_contribution(
    grad: FloatArray,
    weights: FloatArray,
    f: FloatArray,
    tau: FloatArray,
    stiffness: FloatArray,
) -> tuple[FloatArray, FloatArray]:
    """Element stiffness ``(24, 24)`` and internal force ``(24,)`` from 8 quadrature points.

    ``r_Ii = Σ_q w τ_ij g_Ij`` and
    ``K_IiJk = Σ_q w (g_Ij c_ijkl g_Jl + δ_ik g_Ij τ_jl g_Jl)``.
    """
    g = np.einsum("qIA,qAj->qIj", grad, inv3(f))
    tau_full = from_voigt(tau)
    c_full = stiffness_to_full(stiffness)
    re = np.einsum("q,qij,qIj->Ii", weights, tau_full, g)
    tmp = np.einsum("qIj,qijkl->qIikl", g, c_full)
    kmat = np.einsum("q,qIikl,qJl->IiJk", weights, tmp, g)
    kgeo = np.einsum("q,qIj,qjl,qJl->IJ", weights, g, tau_full, g)
    ke = kmat + kgeo[:, None, :, None] * _GEOMETRIC
    return ke.reshape(DOFS_PER_ELEMENT, DOFS_PER_ELEMENT), re.reshape(DOFS_PER_ELEMENT)


class _Scatter:
    """Accumulates element blocks into CSR values and a residual in call order."""

    def __init__(self, pattern: SparsityPattern) -> None:
        self.pattern = pattern
        self.matrix = pattern.new_matrix()
        self.r = np.zeros(pattern.n_dofs)

    def __call__(self, e: int, ke: FloatArray, re: FloatArray) -> None:
        self.matrix.data[self.pattern.slots[e]] += ke.ravel()
        self.r[self.pattern.element_dofs[e]] += re


def _finish(
    fe: FeModel, scatter: _Scatter, load_factor: float
) -> tuple[sp.csr_matrix, FloatArray]:
    r = scatter.r
    if fe.dofmap.tractions:
        r = r - traction_load(fe.mesh, fe.dofmap, load_factor)
    return scatter.matrix, r


# ── Drivers ──────────────────────────────────────────────────────────────────


def _run_elements(
    model: NcmDefinition,
    fe: FeModel,
    u_nodes: FloatArray,
    first: int,
    last: int,
    batch: MaterialBatch,
    sink: ElementSink,
    timings: AssemblyTimings,
) -> None:
    """Batch-vectorized assembly of elements ``first..last`` into ``sink``.

    Quadrature points are processed in runs of ``batch.capacity``; points
    of an element split across runs wait in a carry buffer until the
    element is complete.
    """
    n_batch = batch.capacity
    qp_start, qp_stop = first * QP_PER_ELEMENT, last * QP_PER_ELEMENT
    carry_f = np.empty((0, 3, 3))
    carry_tau = np.empty((0, 6))
    carry_c = np.empty((0, 6, 6))
    next_el = first
    for start in range(qp_start, qp_stop, n_batch):
        stop = min(start + n_batch, qp_stop)
        f = trial_F_block(fe, u_nodes, start, stop)
        timings.max_trace_c = max(timings.max_trace_c, max_trace_c(f))
        batch.load(f)
        t0 = time.perf_counter_ns()
        try:
            eval_batch(model, batch)
        except BatchEvaluationError as exc:
            g = start + exc.index
            raise ElementInversionError(g // QP_PER_ELEMENT, g % QP_PER_ELEMENT, exc.cause) from exc
        timings.constitutive_ns += time.perf_counter_ns() - t0

        k = stop - start
        carry_f = np.concatenate([carry_f, f])
        carry_tau = np.concatenate([carry_tau, batch.tau[:k]])
        carry_c = np.concatenate([carry_c, batch.stiffness[:k]])
        complete = stop // QP_PER_ELEMENT - next_el
        for local in range(complete):
            e = next_el + local
            rows = slice(local * QP_PER_ELEMENT, (local + 1) * QP_PER_ELEMENT)
            ke, re = element_contribution(
                fe.cache.grad[e], fe.cache.weights[e], carry_f[rows], carry_tau[rows], carry_c[rows]
            )
            sink(e, ke, re)
        done = complete * QP_PER_ELEMENT
        carry_f, carry_tau, carry_c = carry_f[done:], carry_tau[done:], carry_c[done:]
        next_el += complete


def _timed(timings: AssemblyTimings | None, t0: int, local: AssemblyTimings) -> None:
    local.other_ns = time.perf_counter_ns() - t0 - local.constitutive_ns
    if timings is not None:
        timings.add(local)


def assemble_traditional(
    model: NcmDefinition,
    fe: FeModel,
    u: FloatArray,
    pattern: SparsityPattern | None = None,
    load_factor: float = 1.0,
    timings: AssemblyTimings | None = None,
) -> tuple[sp.csr_matrix, FloatArray]:
    """Element loop with one constitutive call per quadrature point."""
    t0 = time.perf_counter_ns()
    local = AssemblyTimings()
    pattern = pattern or build_pattern(fe)
    u_nodes = _nodal(u, fe.mesh.n_nodes)
    scatter = _Scatter(pattern)
    tau = np.empty((QP_PER_ELEMENT, 6))
    stiffness = np.empty((QP_PER_ELEMENT, 6, 6))
    for e in range(fe.mesh.n_elements):
        base = e * QP_PER_ELEMENT
        f = trial_F_block(fe, u_nodes, base, base + QP_PER_ELEMENT)
        local.max_trace_c = max(local.max_trace_c, max_trace_c(f))
        for q in range(QP_PER_ELEMENT):
            t1 = time.perf_counter_ns()
            try:
                _, tau[q], stiffness[q] = eval_point(model, f[q])
            except NcmFeError as exc:
                raise ElementInversionError(e, q, exc) from exc
            local.constitutive_ns += time.perf_counter_ns() - t1
        ke, re = element_contribution(fe.cache.grad[e], fe.cache.weights[e], f, tau, stiffness)
        scatter(e, ke, re)
    result = _finish(fe, scatter, load_factor)
    _timed(timings, t0, local)
    return result


def assemble_batch_vectorized(
    model: NcmDefinition,
    fe: FeModel,
    u: FloatArray,
    n_batch: int,
    pattern: SparsityPattern | None = None,
    load_factor: float = 1.0,
    timings: AssemblyTimings | None = None,
    batch: MaterialBatch | None = None,
) -> tuple[sp.csr_matrix, FloatArray]:
    """Quadrature points in runs of ``n_batch`` through one reused material table.

    Pass ``batch`` to reuse a table across calls; it is replaced when its
    capacity differs from ``n_batch``.
    """
    if n_batch < 1:
        raise ValueError(f"n_batch must be >= 1, got {n_batch}")
    t0 = time.perf_counter_ns()
    local = AssemblyTimings()
    pattern = pattern or build_pattern(fe)
    if batch is None or batch.capacity != n_batch:
        batch = MaterialBatch(n_batch)
    scatter = _Scatter(pattern)
    _run_elements(model, fe, _nodal(u, fe.mesh.n_nodes), 0, fe.mesh.n_elements, batch, scatter, local)
    result = _finish(fe, scatter, load_factor)
    _timed(timings, t0, local)
    return result


def assemble_global_vectorized(
    model: NcmDefinition,
    fe: FeModel,
    u: FloatArray,
    pattern: SparsityPattern | None = None,
    load_factor: float = 1.0,
    timings: AssemblyTimings | None = None,
    batch: MaterialBatch | None = None,
) -> tuple[sp.csr_matrix, FloatArray]:
    """One constitutive call over all ``n_el * 8`` quadrature points."""
    n_qp = fe.mesh.n_elements * QP_PER_ELEMENT
    return assemble_batch_vectorized(
        model, fe, u, n_qp, pattern=pattern, load_factor=load_factor, timings=timings, batch=batch
    )


class _ElementBuffer:
    """Private per-worker storage for the element blocks of one range."""

    def __init__(self, first: int, last: int) -> None:
        self.first = first
        self.ke = np.empty((last - first, DOFS_PER_ELEMENT, DOFS_PER_ELEMENT))
        self.re = np.empty((last - first, DOFS_PER_ELEMENT))

    def __call__(self, e: int, ke: FloatArray, re: FloatArray) -> None:
        self.ke[e - self.first] = ke
        self.re[e - self.first] = re


def element_ranges(n_elements: int, n_workers: int) -> list[tuple[int, int]]:
    """Contiguous, non-empty element ranges for at most ``n_elements`` workers."""
    if n_workers < 1:
        raise ValueError(f"n_workers must be >= 1, got {n_workers}")
    parts = np.array_split(np.arange(n_elements), min(n_workers, max(n_elements, 1)))
    return [(int(p[0]), int(p[-1]) + 1) for p in parts if p.size]


def worker_batches(fe: FeModel, n_batch: int, n_workers: int) -> list[MaterialBatch]:
    """One material table of capacity ``n_batch`` per partitioned-assembly worker."""
    return [MaterialBatch(n_batch) for _ in element_ranges(fe.mesh.n_elements, n_workers)]


def assemble_partitioned(
    model: NcmDefinition,
    fe: FeModel,
    u: FloatArray,
    n_batch: int,
    n_workers: int,
    pattern: SparsityPattern | None = None,
    load_factor: float = 1.0,
    timings: AssemblyTimings | None = None,
    batches: Sequence[MaterialBatch] | None = None,
) -> tuple[sp.csr_matrix, FloatArray]:
    """Batch-vectorized assembly of contiguous element ranges on ``n_workers`` threads.

    Each worker owns a material table and a block buffer; the merge scatters
    the buffers single-threaded in element order.  The reported
    constitutive time is the slowest worker's.  ``batches`` supplies one
    reusable table per worker (see :func:`worker_batches`); without it the
    tables are allocated for this call only.
    """
    if n_batch < 1:
        raise ValueError(f"n_batch must be >= 1, got {n_batch}")
    t0 = time.perf_counter_ns()
    pattern = pattern or build_pattern(fe)
    u_nodes = _nodal(u, fe.mesh.n_nodes)
    ranges = element_ranges(fe.mesh.n_elements, n_workers)
    if batches is None:
        batches = worker_batches(fe, n_batch, n_workers)
    elif len(batches) < len(ranges):
        raise ValueError(f"need {len(ranges)} material tables, got {len(batches)}")

    def work(worker: int, first: int, last: int) -> tuple[_ElementBuffer, AssemblyTimings]:
        buffer = _ElementBuffer(first, last)
        local = AssemblyTimings()
        try:
            _run_elements(model, fe, u_nodes, first, last, batches[worker], buffer, local)
        except ElementInversionError as exc:
            raise ElementInversionError(exc.element, exc.qp, exc.cause, worker=worker) from exc
        return buffer, local

    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        futures = [pool.submit(work, w, first, last) for w, (first, last) in enumerate(ranges)]
        results = [fut.result() for fut in futures]

    local = AssemblyTimings()
    scatter = _Scatter(pattern)
    for buffer, worker_timings in results:
        local.constitutive_ns = max(local.constitutive_ns, worker_timings.constitutive_ns)
        local.max_trace_c = max(local.max_trace_c, worker_timings.max_trace_c)
        for offset in range(buffer.ke.shape[0]):
            scatter(buffer.first + offset, buffer.ke[offset], buffer.re[offset])
    result = _finish(fe, scatter, load_factor)
    _timed(timings, t0, local)
    logger.debug("partitioned assembly over %d workers", len(ranges))
    return result


def assemble(
    model: NcmDefinition,
    fe: FeModel,
    u: FloatArray,
    mode: str,
    n_batch: int = 1,
    n_workers: int = 1,
    pattern: SparsityPattern | None = None,
    load_factor: float = 1.0,
    timings: AssemblyTimings | None = None,
    batch: MaterialBatch | None = None,
    batches: Sequence[MaterialBatch] | None = None,
) -> tuple[sp.csr_matrix, FloatArray]:
    """Dispatch on ``mode`` (``trad``, ``global``, ``batch``, ``partitioned``).

    ``batch`` is the reused table of the batch and global modes, ``batches``
    the per-worker tables of the partitioned mode.
    """
    common = {"pattern": pattern, "load_factor": load_factor, "timings": timings}
    if mode == "trad":
        return assemble_traditional(model, fe, u, **common)
    if mode == "global":
        return assemble_global_vectorized(model, fe, u, batch=batch, **common)
    if mode == "batch":
        return assemble_batch_vectorized(model, fe, u, n_batch, batch=batch, **common)
    if mode == "partitioned":
        return assemble_partitioned(model, fe, u, n_batch, n_workers, batches=batches, **common)
    raise ValueError(f"unknown assembly mode {mode!r}")


def assemble_energy(
    model: NcmDefinition, fe: FeModel, u: FloatArray, load_factor: float = 1.0
) -> float:
    """Total potential ``Σ w Ψ - f_ext · u``; its gradient is the residual."""
    u_nodes = _nodal(u, fe.mesh.n_nodes)
    n_qp = fe.mesh.n_elements * QP_PER_ELEMENT
    batch = MaterialBatch(n_qp)
    batch.load(trial_F_block(fe, u_nodes, 0, n_qp))
    try:
        eval_batch(model, batch)
    except BatchEvaluationError as exc:
        raise ElementInversionError(exc.index // QP_PER_ELEMENT, exc.index % QP_PER_ELEMENT, exc.cause) from exc
    stored = float(np.sum(fe.cache.weights.ravel() * batch.psi[:n_qp]))
    if fe.dofmap.tractions:
        stored -= float(traction_load(fe.mesh, fe.dofmap, load_factor) @ u)
    return stored


# ── Dirichlet elimination ────────────────────────────────────────────────────


class DirichletEliminator:
    """Row/column elimination on a fixed pattern, keeping K symmetric.

    Constrained rows and columns are zeroed except the diagonal, which keeps
    its assembled value; the right-hand side of a constrained row is
    ``diag * Δ`` so the solve returns the prescribed increment there.
    """

    def __init__(self, pattern: SparsityPattern, dofmap: DofMap) -> None:
        self.constrained = dofmap.constrained
        self.free = dofmap.free
        is_c = np.zeros(pattern.n_dofs, dtype=bool)
        is_c[self.constrained] = True
        rows = pattern._row_of_slot()
        self.drop = is_c[rows] | is_c[pattern.indices]
        self.diag_slots = pattern.slot_of(self.constrained, self.constrained)

    def apply(
        self, k: sp.csr_matrix, r: FloatArray, increment: FloatArray
    ) -> tuple[sp.csr_matrix, FloatArray]:
        """Return ``(A, b)`` for ``A Δd = b`` with ``Δd_c = increment``."""
        delta = np.zeros(r.size)
        delta[self.constrained] = increment
        rhs = -r - k @ delta
        diag = k.data[self.diag_slots].copy()
        a = k.copy()
        a.data[self.drop] = 0.0
        a.data[self.diag_slots] = diag
        rhs[self.constrained] = diag * increment
        return a, rhs


