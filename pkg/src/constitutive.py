"""
Neural constitutive models: ``Ψ = N ∘ K`` evaluated over material tables.

Two derivative modes share one entry point:

- ``cgo``: kinematic tensors and analytic inner-network derivatives are
  pushed forward to Kirchhoff stress and spatial stiffness in one pass.
- ``fd``: Ψ(F) is differentiated by central differences on the nine
  components of F and mapped through ``τ = P Fᵀ``,
  ``c_ijkl = F_jJ A_iJkL F_lL - δ_ik τ_jl``.  This is the slow baseline
  the benchmarks time against.

``eval_point`` is ``eval_batch`` on a one-point table, so both paths run
the same floating-point operations for every point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .constants import FD_GRADIENT_STEP, FD_HESSIAN_STEP, GENT_THOMAS_MODEL
from .errors import (
    BatchEvaluationError,
    DimensionMismatchError,
    KinematicDomainError,
    ModelDefinitionError,
    NcmFeError,
    NetworkDomainError,
)
from .inner_networks import (
    eval_inner,
    fd_combine,
    fd_stencil,
    inner_width,
    validate_inner,
)
from .kinematics import eval_kinematics, loading_path, validate_config
from .models import FloatArray, KinematicConfig, MaterialBatch, NcmDefinition
from .tensors import (
    full_to_stiffness,
    mat3_mul,
    push_forward_stiffness,
    push_forward_stress,
    to_voigt,
)

logger = logging.getLogger(__name__)

_EYE3 = np.eye(3)


# ── Definitions ──────────────────────────────────────────────────────────────


def gent_thomas_definition(derivative_mode: str = "cgo") -> NcmDefinition:
    """Analytic reference model on the isochoric layer (Ī1, Ī2, J)."""
    return NcmDefinition(
        kinematics=KinematicConfig(variant="isochoric", invariants=("I1", "I2")),
        architecture=GENT_THOMAS_MODEL,
        weights=None,
        derivative_mode=derivative_mode,  # type: ignore[arg-type]
        name=GENT_THOMAS_MODEL,
    )


def validate_definition(model: NcmDefinition) -> None:
    """Check the kinematic layer, the weights, and that their widths agree."""
    validate_config(model.kinematics)
    validate_inner(model.architecture, model.weights)
    if model.derivative_mode not in ("cgo", "fd"):
        raise ModelDefinitionError(f"unknown derivative mode {model.derivative_mode!r}")
    produced = model.kinematics.width
    expected = inner_width(model.architecture, model.weights)
    if produced != expected:
        raise DimensionMismatchError(
            f"kinematic layer produces {produced} scalars "
            f"({', '.join(model.kinematics.output_names)}) but the inner network expects {expected}"
        )


# ── Kernels ──────────────────────────────────────────────────────────────────


def _cgo_kernel(model: NcmDefinition, f: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    kin = eval_kinematics(f, model.kinematics)
    inner = eval_inner(model.architecture, model.weights, kin.values)
    tau = push_forward_stress(inner.grad, kin.g)
    stiffness = push_forward_stiffness(inner.grad, inner.hess, kin.g, kin.gg)
    return inner.value, tau, stiffness


def energy(model: NcmDefinition, f: FloatArray) -> FloatArray:
    """Strain energy density only, for ``(..., 3, 3)`` deformation gradients."""
    kin = eval_kinematics(f, model.kinematics)
    return eval_inner(model.architecture, model.weights, kin.values).value


def _fd_kernel(model: NcmDefinition, f: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    n = f.shape[0]
    flat = f.reshape(n, 9)
    scale = np.maximum(1.0, np.abs(flat))
    h = FD_GRADIENT_STEP * scale
    hh = FD_HESSIAN_STEP * scale
    stencil = fd_stencil(9, h, hh)
    perturbed = flat[None, :, :] + stencil
    n_rows = perturbed.shape[0]
    try:
        values = energy(model, perturbed.reshape(n_rows * n, 3, 3)).reshape(n_rows, n)
    except (KinematicDomainError, NetworkDomainError) as exc:
        exc.index = exc.index % n
        raise
    fd = fd_combine(values, 9, h, hh)

    p = fd.grad.reshape(n, 3, 3)
    a = fd.hess.reshape(n, 3, 3, 3, 3)
    tau_full = mat3_mul(p, np.swapaxes(f, -1, -2))
    tau_full = 0.5 * (tau_full + np.swapaxes(tau_full, -1, -2))

    # c_ijkl = F_jJ A_iJkL F_lL - δ_ik τ_jl
    t1 = np.zeros((n, 3, 3, 3, 3))
    for big_j in range(3):
        t1 = t1 + f[:, None, :, big_j, None, None] * a[:, :, None, big_j, :, :]
    c_full = np.zeros((n, 3, 3, 3, 3))
    for big_l in range(3):
        c_full = c_full + t1[:, :, :, :, big_l, None] * f[:, None, None, None, :, big_l]
    c_full = c_full - _EYE3[:, None, :, None] * tau_full[:, None, :, None, :]

    stiffness = full_to_stiffness(c_full)
    stiffness = 0.5 * (stiffness + np.swapaxes(stiffness, -1, -2))
    return fd.value, to_voigt(tau_full), stiffness


# ── Table evaluation ─────────────────────────────────────────────────────────


def eval_batch(model: NcmDefinition, batch: MaterialBatch) -> None:
    """Fill ``psi``, ``tau`` and ``stiffness`` for the live rows of ``batch`` in place."""
    n = batch.n
    if n < 1:
        raise ValueError("material batch is empty")
    f = batch.f[:n]
    kernel = _fd_kernel if model.derivative_mode == "fd" else _cgo_kernel
    try:
        psi, tau, stiffness = kernel(model, f)
    except (KinematicDomainError, NetworkDomainError) as exc:
        raise BatchEvaluationError(exc.index, exc) from exc
    batch.psi[:n] = psi
    batch.tau[:n] = tau
    batch.stiffness[:n] = stiffness


def eval_point(model: NcmDefinition, f: FloatArray) -> tuple[float, FloatArray, FloatArray]:
    """Ψ, Voigt τ ``(6,)`` and Voigt 𝕔 ``(6, 6)`` at a single deformation gradient."""
    batch = MaterialBatch(1)
    batch.load(np.asarray(f, dtype=float).reshape(1, 3, 3))
    try:
        eval_batch(model, batch)
    except BatchEvaluationError as exc:
        raise exc.cause from None
    return float(batch.psi[0]), batch.tau[0].copy(), batch.stiffness[0].copy()


def eval_gent_thomas(f: FloatArray) -> tuple[float, FloatArray, FloatArray]:
    """``Ψ = 0.5 (Ī1 - 3) + ln(Ī2 / 3) + (J - 1)²`` with exact derivatives."""
    return eval_point(gent_thomas_definition(), f)


def eval_sweep(
    model: NcmDefinition,
    f: FloatArray,
    batch_size: int,
    batch: MaterialBatch | None = None,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Evaluate ``f`` ``(n, 3, 3)`` in runs of ``batch_size`` through one reused table.

    Errors name the global point index.
    """
    n = f.shape[0]
    if batch is None or batch.capacity < batch_size:
        batch = MaterialBatch(batch_size)
    psi = np.empty(n)
    tau = np.empty((n, 6))
    stiffness = np.empty((n, 6, 6))
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        batch.load(f[start:stop])
        try:
            eval_batch(model, batch)
        except BatchEvaluationError as exc:
            raise BatchEvaluationError(start + exc.index, exc.cause) from exc
        k = stop - start
        psi[start:stop] = batch.psi[:k]
        tau[start:stop] = batch.tau[:k]
        stiffness[start:stop] = batch.stiffness[:k]
    return psi, tau, stiffness


def reference_state(model: NcmDefinition) -> tuple[float, FloatArray]:
    """Ψ and τ at F = I; trained networks need not be stress-free there."""
    psi, tau, _ = eval_point(model, _EYE3)
    return psi, tau


# ── Loading-path scans ───────────────────────────────────────────────────────


@dataclass
class PathRow:
    path: str
    gamma: float
    psi: float
    error: str = ""


def path_gammas(gamma_max: float, steps: int) -> list[float]:
    """``γ_i = γ_max i / steps`` for ``i = 0..steps``; a single 0 when γ_max is 0."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if gamma_max == 0.0:
        return [0.0]
    return [gamma_max * i / steps for i in range(steps + 1)]


def path_scan(
    model: NcmDefinition, path: str, gamma_max: float, steps: int, strict: bool = True
) -> list[PathRow]:
    """Ψ sampled along a loading path.

    With ``strict`` a domain violation raises; otherwise the offending row
    carries ``psi = nan`` and the error message.
    """
    rows = []
    for gamma in path_gammas(gamma_max, steps):
        try:
            psi, _, _ = eval_point(model, loading_path(path, gamma))
            rows.append(PathRow(path=path.upper(), gamma=gamma, psi=psi))
        except NcmFeError as exc:
            if strict:
                raise
            logger.warning("path %s at gamma=%g: %s", path, gamma, exc)
            rows.append(PathRow(path=path.upper(), gamma=gamma, psi=float("nan"), error=str(exc)))
    return rows
