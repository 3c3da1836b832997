"""
Kinematic layer: invariants of C and their push-forward derivative tensors.

For every active invariant K_m the layer returns the value, the
second-order tensor ``G^m = F (∂K_m/∂C) Fᵀ`` and the fourth-order tensor
``𝔾^m = (F⊗F)(∂²K_m/∂C∂C)(Fᵀ⊗Fᵀ)``, all in Voigt form.  Inputs may carry
any number of leading batch axes; arithmetic is elementwise across them.
"""

from __future__ import annotations

import logging
import re

import numpy as np

from .constants import (
    IDENTITY_VOIGT,
    ISOCHORIC_EXPONENT_LINEAR,
    ISOCHORIC_EXPONENT_QUADRATIC,
    LOADING_PATHS,
    MIN_JACOBIAN,
    UNIT_VECTOR_TOL,
)
from .errors import KinematicDomainError, ModelDefinitionError
from .models import FloatArray, KinematicConfig, KinematicEval
from .tensors import (
    det3,
    left_cauchy_green,
    sym_matvec,
    sym_outer,
    sym_square,
    sym_trace,
    tensor_prod,
    tensor_prod_bar,
)

logger = logging.getLogger(__name__)

_INVARIANT_RE = re.compile(r"^(I1|I2|I3|J)$|^(I4|I5)_(\d+)_(\d+)$")

_I_OTIMES_I = tensor_prod(IDENTITY_VOIGT, IDENTITY_VOIGT)
_I_OTIMES_BAR_I = tensor_prod_bar(IDENTITY_VOIGT, IDENTITY_VOIGT)

_ISOCHORIC_EXPONENTS = {
    "I1": ISOCHORIC_EXPONENT_LINEAR,
    "I2": ISOCHORIC_EXPONENT_QUADRATIC,
    "I4": ISOCHORIC_EXPONENT_LINEAR,
    "I5": ISOCHORIC_EXPONENT_QUADRATIC,
}


# ── Config parsing ───────────────────────────────────────────────────────────


def parse_invariant(name: str) -> tuple[str, int, int]:
    """Split an invariant name into ``(kind, i, j)``; i = j = -1 for isotropic ones."""
    match = _INVARIANT_RE.match(name)
    if match is None:
        raise ModelDefinitionError(f"unknown invariant {name!r}")
    if match.group(1):
        return match.group(1), -1, -1
    return match.group(2), int(match.group(3)), int(match.group(4))


def validate_config(cfg: KinematicConfig) -> None:
    """Raise :class:`ModelDefinitionError` if ``cfg`` cannot be evaluated."""
    if cfg.variant not in ("standard", "isochoric"):
        raise ModelDefinitionError(f"unknown kinematic variant {cfg.variant!r}")
    if not cfg.invariants:
        raise ModelDefinitionError("at least one invariant must be active")
    if len(set(cfg.invariants)) != len(cfg.invariants):
        raise ModelDefinitionError(f"duplicate invariants in {list(cfg.invariants)}")

    vectors = np.asarray(cfg.structural_vectors, dtype=float).reshape(-1, 3)
    norms = np.linalg.norm(vectors, axis=1)
    for i, norm in enumerate(norms):
        if abs(norm - 1.0) > UNIT_VECTOR_TOL:
            raise ModelDefinitionError(f"structural vector {i} has norm {norm!r}, expected 1")

    for name in cfg.invariants:
        kind, i, j = parse_invariant(name)
        if cfg.variant == "isochoric" and kind in ("I3", "J"):
            raise ModelDefinitionError(
                f"{name} is not an isochoric invariant (J is appended automatically)"
            )
        if i < 0:
            continue
        if i >= len(vectors) or j >= len(vectors):
            raise ModelDefinitionError(
                f"{name} references structural vector outside 0..{len(vectors) - 1}"
            )
        if i != j and not cfg.allow_cross_pairs:
            raise ModelDefinitionError(f"{name} is a cross pair; set allow_cross_pairs")


def check_jacobian(f: FloatArray) -> FloatArray:
    """Return ``det F``; raise :class:`KinematicDomainError` at the first bad point."""
    det = det3(f)
    bad = ~(det > MIN_JACOBIAN)
    if np.any(bad):
        index = int(np.flatnonzero(bad.ravel())[0])
        value = float(det.ravel()[index])
        raise KinematicDomainError(
            f"det F = {value:.6g} is not above {MIN_JACOBIAN:g}", index=index
        )
    return det


# ── Standard invariants ──────────────────────────────────────────────────────


def _spatial_vectors(f: FloatArray, vectors: FloatArray) -> list[FloatArray]:
    """a_i = F A_i for each structural vector."""
    out = []
    for vec in vectors:
        a = f[..., :, 0] * vec[0]
        a = a + f[..., :, 1] * vec[1]
        a = a + f[..., :, 2] * vec[2]
        out.append(a)
    return out


def _dot(a: FloatArray, b: FloatArray) -> FloatArray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _standard_terms(
    f: FloatArray, cfg: KinematicConfig, names: tuple[str, ...], det: FloatArray
) -> tuple[list[FloatArray], list[FloatArray], list[FloatArray]]:
    batch = f.shape[:-2]
    b = left_cauchy_green(f)
    i1 = sym_trace(b)
    vectors = np.asarray(cfg.structural_vectors, dtype=float).reshape(-1, 3)
    spatial = _spatial_vectors(f, vectors)
    b_spatial = [sym_matvec(b, a) for a in spatial]
    zero4 = np.zeros((*batch, 6, 6))

    values: list[FloatArray] = []
    gs: list[FloatArray] = []
    ggs: list[FloatArray] = []
    for name in names:
        kind, i, j = parse_invariant(name)
        if kind == "I1":
            values.append(i1)
            gs.append(b)
            ggs.append(zero4)
        elif kind == "I2":
            b2 = sym_square(b)
            values.append(0.5 * (i1 * i1 - sym_trace(b2)))
            gs.append(i1[..., None] * b - b2)
            ggs.append(tensor_prod(b, b) - tensor_prod_bar(b, b))
        elif kind == "I3":
            i3 = det * det
            values.append(i3)
            gs.append(i3[..., None] * IDENTITY_VOIGT)
            ggs.append(i3[..., None, None] * (_I_OTIMES_I - _I_OTIMES_BAR_I))
        elif kind == "J":
            values.append(det)
            gs.append((0.5 * det)[..., None] * IDENTITY_VOIGT)
            ggs.append((0.25 * det)[..., None, None] * (_I_OTIMES_I - 2.0 * _I_OTIMES_BAR_I))
        elif kind == "I4":
            values.append(_dot(spatial[i], spatial[j]))
            gs.append(sym_outer(spatial[i], spatial[j]))
            ggs.append(zero4)
        else:  # I5
            values.append(_dot(spatial[i], b_spatial[j]))
            gs.append(sym_outer(spatial[i], b_spatial[j]) + sym_outer(spatial[j], b_spatial[i]))
            m = sym_outer(spatial[i], spatial[j])
            ggs.append(tensor_prod_bar(b, m) + tensor_prod_bar(m, b))
    return values, gs, ggs


def _stack(values: list[FloatArray], gs: list[FloatArray], ggs: list[FloatArray]) -> KinematicEval:
    return KinematicEval(
        values=np.stack(values, axis=-1),
        g=np.stack(gs, axis=-2),
        gg=np.stack(ggs, axis=-3),
    )


def eval_standard(f: FloatArray, cfg: KinematicConfig) -> KinematicEval:
    """Standard invariants I1, I2, I3 (or J), I4_ij, I5_ij of ``C = FᵀF``."""
    f = np.asarray(f, dtype=float)
    det = check_jacobian(f)
    return _stack(*_standard_terms(f, cfg, cfg.invariants, det))


# ── Isochoric invariants ─────────────────────────────────────────────────────


def eval_isochoric(f: FloatArray, cfg: KinematicConfig) -> KinematicEval:
    """Isochoric invariants ``Ī_m = I3^{e_m} I_m`` followed by J.

    With ``Ḡ = I3^e G`` and ``𝔾̄ = I3^e 𝔾`` from the standard layer:
    ``G = Ḡ + e Ī I`` and ``𝔾 = 𝔾̄ + e (I⊗Ḡ + Ḡ⊗I + Ī (e I⊗I − I⊗̄I))``.
    """
    f = np.asarray(f, dtype=float)
    det = check_jacobian(f)
    std_values, std_g, std_gg = _standard_terms(f, cfg, cfg.invariants, det)

    # I3^(-1/3) and I3^(-2/3) from one cube root, taken on a contiguous 1-d array
    cube_root = np.cbrt(np.ascontiguousarray(det * det).reshape(-1)).reshape(np.shape(det))
    scale_linear = 1.0 / cube_root
    scale_quadratic = 1.0 / (cube_root * cube_root)

    values: list[FloatArray] = []
    gs: list[FloatArray] = []
    ggs: list[FloatArray] = []
    for name, value, g, gg in zip(cfg.invariants, std_values, std_g, std_gg, strict=True):
        kind, _, _ = parse_invariant(name)
        e = _ISOCHORIC_EXPONENTS[kind]
        scale = scale_linear if e == ISOCHORIC_EXPONENT_LINEAR else scale_quadratic
        iso = scale * value
        g_bar = scale[..., None] * g
        gg_bar = scale[..., None, None] * gg
        values.append(iso)
        gs.append(g_bar + (e * iso)[..., None] * IDENTITY_VOIGT)
        coupling = tensor_prod(IDENTITY_VOIGT, g_bar) + tensor_prod(g_bar, IDENTITY_VOIGT)
        coupling = coupling + iso[..., None, None] * (e * _I_OTIMES_I - _I_OTIMES_BAR_I)
        ggs.append(gg_bar + e * coupling)

    j_values, j_g, j_gg = _standard_terms(f, cfg, ("J",), det)
    values.extend(j_values)
    gs.extend(j_g)
    ggs.extend(j_gg)
    return _stack(values, gs, ggs)


def eval_kinematics(f: FloatArray, cfg: KinematicConfig) -> KinematicEval:
    """Dispatch on ``cfg.variant``."""
    if cfg.variant == "isochoric":
        return eval_isochoric(f, cfg)
    return eval_standard(f, cfg)


# ── Loading paths ────────────────────────────────────────────────────────────


def loading_path(path: str, gamma: float) -> FloatArray:
    """Deformation gradient of a named homogeneous loading path at amplitude ``gamma``."""
    key = path.upper()
    if key not in LOADING_PATHS:
        raise ValueError(f"unknown loading path {path!r}; expected one of {LOADING_PATHS}")
    if key != "SS" and not gamma > -1.0:
        raise KinematicDomainError(f"path {key} requires gamma > -1, got {gamma}")

    f = np.eye(3)
    stretch = 1.0 + gamma
    if key == "UT":
        f[0, 0] = stretch
    elif key == "UC":
        f[0, 0] = 1.0 / stretch
    elif key == "BT":
        f[0, 0] = f[1, 1] = stretch
    elif key == "BC":
        f[0, 0] = f[1, 1] = 1.0 / stretch
    elif key == "SS":
        f[0, 1] = gamma
    else:  # PS
        f[0, 0] = stretch
        f[1, 1] = 1.0 / stretch
    return f
