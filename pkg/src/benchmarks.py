"""
Benchmark sweeps behind ``matpoint-bench``, ``fe-bench`` and ``path-scan``.

Every timed cell runs once untimed (warm-up), then ``repetitions`` timed
runs that each produce a ``raw`` row; a ``median`` row per cell carries the
derived speed-up columns.  Peak memory comes from one extra run under
``tracemalloc`` so the timed runs stay uninstrumented.

CSV files start with ``#`` comment lines holding the schema version, the
package/git version and the run configuration; the column set is
:class:`src.schemas.BenchRecord`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import statistics
import subprocess
import sys
import time
import tracemalloc
from collections.abc import Callable, Iterable
from dataclasses import replace
from typing import TextIO

import numpy as np

from .__version__ import __version__
from .assembly import assemble, build_pattern
from .constants import (
    CSV_SCHEMA_VERSION,
    LOADING_PATHS,
    QP_PER_ELEMENT,
    RANDOM_F_MIN_DET,
    RANDOM_F_SCALE,
)
from .constitutive import eval_sweep, gent_thomas_definition, path_scan
from .errors import NcmFeError
from .mesh import twist_cube_model
from .models import CgConfig, FloatArray, NcmDefinition, NewtonConfig
from .schemas import BenchRecord, PathScanRecord
from .solver import newton_solve
from .tensors import det3

logger = logging.getLogger(__name__)


# ── Provenance ───────────────────────────────────────────────────────────────


def version_string() -> str:
    """Package version plus ``git describe`` of the working tree when available."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    described = result.stdout.strip()
    if result.returncode != 0 or not described:
        return __version__
    return f"{__version__}+{described}"


def digest(*arrays: FloatArray) -> str:
    """Short SHA-256 over the raw bytes of ``arrays``; equal only for bitwise-equal data."""
    h = hashlib.sha256()
    for arr in arrays:
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


# ── Sampling and timing ──────────────────────────────────────────────────────


def random_deformations(n: int, rng: np.random.Generator) -> FloatArray:
    """``F = I + 0.2 G`` with standard-normal ``G``; draws with det F ≤ 0.2 are redrawn."""
    out = np.empty((n, 3, 3))
    filled = 0
    while filled < n:
        f = np.eye(3) + RANDOM_F_SCALE * rng.standard_normal((n - filled, 3, 3))
        keep = f[det3(f) > RANDOM_F_MIN_DET]
        out[filled : filled + keep.shape[0]] = keep
        filled += keep.shape[0]
    return out


def time_repeated(fn: Callable[[], object], repetitions: int, warmup: int = 1) -> list[int]:
    """Wall times in nanoseconds of ``repetitions`` calls after ``warmup`` discarded calls."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        fn()
        times.append(max(1, time.perf_counter_ns() - t0))
    return times


def peak_memory(fn: Callable[[], object]) -> int:
    """Python-heap high-water mark of one ``fn()`` call, in bytes (tracemalloc)."""
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return int(peak)


def loglog_slope(x: Iterable[float], y: Iterable[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(list(x), dtype=float))
    ly = np.log(np.asarray(list(y), dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def _median_row(rows: list[BenchRecord]) -> BenchRecord:
    numeric = ("constitutive_ns", "assembly_ns", "solve_ns", "total_ns")
    update = {key: int(statistics.median(getattr(r, key) for r in rows)) for key in numeric}
    return rows[0].model_copy(update={**update, "kind": "median", "repetition": -1})


# ── Material-point sweep ─────────────────────────────────────────────────────


def matpoint_bench(
    model: NcmDefinition,
    n_points: Iterable[int],
    batch_sizes: Iterable[int],
    modes: Iterable[str],
    repetitions: int,
    seed: int,
) -> list[BenchRecord]:
    """Time batched constitutive sweeps over random deformation gradients.

    Each ``n_points`` draws its own gradients from ``seed``; every batch
    size and mode evaluates the same draw, so the ``digest`` column agrees
    across batch sizes within a mode.
    """
    batch_sizes = list(batch_sizes)
    records: list[BenchRecord] = []
    for n in n_points:
        f = random_deformations(n, np.random.default_rng(seed))
        for mode in modes:
            mode_model = replace(model, derivative_mode=mode)  # type: ignore[arg-type]
            for batch_size in batch_sizes:
                outputs: dict[str, tuple[FloatArray, ...]] = {}

                def run(m: NcmDefinition = mode_model, b: int = batch_size) -> None:
                    outputs["last"] = eval_sweep(m, f, b)

                times = time_repeated(run, repetitions)
                peak = peak_memory(run)
                cell = [
                    BenchRecord(
                        experiment="matpoint",
                        architecture=model.architecture,
                        mode=mode,
                        n_points=n,
                        batch_size=batch_size,
                        repetition=rep,
                        constitutive_ns=t,
                        total_ns=t,
                        peak_bytes=peak,
                        digest=digest(*outputs["last"]),
                    )
                    for rep, t in enumerate(times)
                ]
                records.extend(cell)
                records.append(_median_row(cell))
                logger.info(
                    "matpoint %s n=%d batch=%d: median %.3f ms",
                    mode,
                    n,
                    batch_size,
                    statistics.median(times) / 1e6,
                )
    add_speedups(records)
    return records


# ── FE sweep ─────────────────────────────────────────────────────────────────


def _fe_cells(
    assemblies: Iterable[str], batch_sizes: list[int], workers: list[int], n_qp: int
) -> list[tuple[str, int, int]]:
    cells = []
    for assembly in assemblies:
        if assembly == "trad":
            cells.append((assembly, 1, 1))
        elif assembly == "global":
            cells.append((assembly, n_qp, 1))
        elif assembly == "batch":
            cells.extend((assembly, b, 1) for b in batch_sizes)
        else:
            cells.extend((assembly, b, w) for b in batch_sizes for w in workers)
    return cells


def fe_bench(
    model: NcmDefinition,
    mesh_sizes: Iterable[int],
    assemblies: Iterable[str],
    batch_sizes: Iterable[int],
    workers: Iterable[int],
    repetitions: int,
    load_steps: int,
    ncfg: NewtonConfig | None = None,
    ccfg: CgConfig | None = None,
) -> list[BenchRecord]:
    """Solve the twist cube for every (mesh size, assembly mode, batch size, workers) cell.

    A failed solve is recorded as a row with ``converged`` False and the
    error text; the sweep continues.
    """
    ncfg = replace(ncfg or NewtonConfig(), load_steps=load_steps)
    assemblies, batch_sizes, workers = list(assemblies), list(batch_sizes), list(workers)
    records: list[BenchRecord] = []
    for n in mesh_sizes:
        fe = twist_cube_model(n)
        n_qp = fe.mesh.n_elements * QP_PER_ELEMENT
        pattern = build_pattern(fe)
        u0 = np.zeros(fe.dofmap.n_dofs)
        for assembly, batch_size, n_workers in _fe_cells(assemblies, batch_sizes, workers, n_qp):
            base = BenchRecord(
                experiment="fe",
                architecture=model.architecture,
                mode=model.derivative_mode,
                assembly=assembly,
                n_dofs=fe.dofmap.n_dofs,
                mesh_n=n,
                batch_size=batch_size,
                workers=n_workers,
            )

            def one_assembly(a: str = assembly, b: int = batch_size, w: int = n_workers) -> None:
                assemble(model, fe, u0, a, n_batch=b, n_workers=w, pattern=pattern)

            one_assembly()
            peak = peak_memory(one_assembly)
            cell = []
            for rep in range(repetitions):
                try:
                    d, report = newton_solve(
                        model,
                        fe,
                        ncfg,
                        ccfg,
                        assembly=assembly,
                        n_batch=batch_size,
                        n_workers=n_workers,
                        raise_on_failure=False,
                    )
                except NcmFeError as exc:
                    logger.warning("fe n=%d %s batch=%d: %s", n, assembly, batch_size, exc)
                    cell.append(
                        base.model_copy(
                            update={"repetition": rep, "converged": False, "error": str(exc), "peak_bytes": peak}
                        )
                    )
                    continue
                if not report.converged:
                    logger.warning("fe n=%d %s batch=%d: %s", n, assembly, batch_size, report.message)
                cell.append(
                    base.model_copy(
                        update={
                            "repetition": rep,
                            "constitutive_ns": report.constitutive_ns,
                            "assembly_ns": report.assembly_other_ns,
                            "solve_ns": report.linear_solve_ns,
                            "total_ns": report.total_ns,
                            "peak_bytes": peak,
                            "newton_iterations": report.newton_iterations,
                            "cg_iterations": report.cg_iterations,
                            "max_trace_c": report.max_trace_c,
                            "converged": report.converged,
                            "digest": digest(d),
                            "error": "" if report.converged else report.message,
                        }
                    )
                )
            records.extend(cell)
            records.append(_median_row(cell))
            logger.info("fe n=%d %s batch=%d workers=%d done", n, assembly, batch_size, n_workers)
    add_speedups(records)
    return records


# ── Derived columns ──────────────────────────────────────────────────────────


def add_speedups(records: list[BenchRecord]) -> None:
    """Fill speed-up columns on ``median`` rows in place.

    - ``speedup_vs_batch1``: same experiment, mode, assembly, size and
      workers at batch size 1.
    - ``speedup_vs_fd``: ``cgo`` rows against the ``fd`` row of the same cell.
    - ``speedup_vs_single_worker``: partitioned rows against one worker.
    """
    medians = [r for r in records if r.kind == "median" and r.total_ns > 0]

    def key(r: BenchRecord, **override: object) -> tuple:
        fields = {
            "experiment": r.experiment,
            "mode": r.mode,
            "assembly": r.assembly,
            "n_points": r.n_points,
            "mesh_n": r.mesh_n,
            "batch_size": r.batch_size,
            "workers": r.workers,
        }
        fields.update(override)
        return tuple(fields.values())

    by_key = {key(r): r for r in medians}
    for r in medians:
        ref = by_key.get(key(r, batch_size=1))
        if ref is not None:
            r.speedup_vs_batch1 = ref.total_ns / r.total_ns
        if r.mode == "cgo":
            ref = by_key.get(key(r, mode="fd"))
            if ref is not None:
                r.speedup_vs_fd = ref.total_ns / r.total_ns
        if r.assembly == "partitioned":
            ref = by_key.get(key(r, workers=1))
            if ref is not None:
                r.speedup_vs_single_worker = ref.total_ns / r.total_ns


# ── Path scans ───────────────────────────────────────────────────────────────


def path_scan_records(
    model: NcmDefinition, gamma_max: float, steps: int, paths: Iterable[str] = LOADING_PATHS
) -> list[PathScanRecord]:
    """Ψ of ``model`` and of the Gent-Thomas reference along each loading path."""
    reference = gent_thomas_definition()
    records = []
    for path in paths:
        rows = path_scan(model, path, gamma_max, steps, strict=False)
        ref_rows = path_scan(reference, path, gamma_max, steps, strict=False)
        for row, ref in zip(rows, ref_rows, strict=True):
            records.append(
                PathScanRecord(
                    path=row.path,
                    gamma=row.gamma,
                    psi_model=row.psi,
                    psi_reference=ref.psi,
                    error=row.error or ref.error,
                )
            )
    return records


# ── CSV output ───────────────────────────────────────────────────────────────


def _open(path: str | None) -> tuple[TextIO, bool]:
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def write_csv(
    path: str | None,
    records: list[BenchRecord] | list[PathScanRecord],
    config: dict | None = None,
    kind: str = "benchmark",
) -> None:
    """Write ``records`` with the ``#`` provenance header; ``-`` or None means stdout.

    Benchmark rows also carry the version and the config echo in their own
    ``version`` and ``config`` columns, so rows stay traceable once files
    are concatenated.
    """
    columns = list(type(records[0]).model_fields if records else BenchRecord.model_fields)
    version = version_string()
    config_json = json.dumps(config or {}, sort_keys=True)
    stream, owned = _open(path)
    try:
        stream.write(f"# ncm-fe {kind} schema {CSV_SCHEMA_VERSION}\n")
        stream.write(f"# version: {version}\n")
        stream.write(f"# config: {config_json}\n")
        writer = csv.DictWriter(stream, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for record in records:
            row = record.model_dump()
            if isinstance(record, BenchRecord):
                row.update(version=version, config=config_json)
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
    finally:
        if owned:
            stream.close()
    if owned:
        logger.info("wrote %d rows to %s", len(records), path)


def read_csv(path: str) -> list[dict[str, str]]:
    """Rows of a CSV written by :func:`write_csv`, comment lines skipped."""
    with open(path, encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))
