"""
Small dense and Voigt-form tensor algebra.

Every function accepts arbitrary leading batch dimensions, so the same code
serves a single material point (``(6,)``, ``(6, 6)``) and a whole material
table (``(n, 6)``, ``(n, 6, 6)``).  Only elementwise operations are used
across the batch axis and sums over small axes are accumulated
sequentially; a point therefore gets the same floating-point result
whether it is evaluated alone or inside a table.

Voigt convention: slots (11, 22, 33, 12, 23, 13), stress-like, i.e. no
factor 2 on shear entries for either second- or fourth-order tensors.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .constants import IDENTITY_VOIGT, VOIGT_I, VOIGT_INDEX, VOIGT_J
from .errors import DimensionMismatchError

FloatArray = NDArray[np.float64]

# (6, 6) index tables: row slot (i, j), column slot (k, l)
_ROW_I = VOIGT_I[:, None]
_ROW_J = VOIGT_J[:, None]
_COL_K = VOIGT_I[None, :]
_COL_L = VOIGT_J[None, :]


# ── Conversions ──────────────────────────────────────────────────────────────


def to_voigt(m: FloatArray) -> FloatArray:
    """Pack symmetric ``(..., 3, 3)`` tensors into ``(..., 6)`` Voigt vectors."""
    return m[..., VOIGT_I, VOIGT_J]


def from_voigt(v: FloatArray) -> FloatArray:
    """Unpack ``(..., 6)`` Voigt vectors into symmetric ``(..., 3, 3)`` tensors."""
    return v[..., VOIGT_INDEX]


def stiffness_to_full(c: FloatArray) -> FloatArray:
    """Expand ``(..., 6, 6)`` Voigt stiffness into ``(..., 3, 3, 3, 3)`` components.

    This is the one place where shear entries are duplicated: component
    ``ijkl`` reads slot ``(voigt(ij), voigt(kl))`` for all 81 index
    combinations, which is exact because both minor symmetries hold.
    """
    return c[..., VOIGT_INDEX[:, :, None, None], VOIGT_INDEX[None, None, :, :]]


def full_to_stiffness(t: FloatArray) -> FloatArray:
    """Reduce ``(..., 3, 3, 3, 3)`` components to Voigt, averaging minor-symmetric pairs."""
    return 0.25 * (
        t[..., _ROW_I, _ROW_J, _COL_K, _COL_L]
        + t[..., _ROW_J, _ROW_I, _COL_K, _COL_L]
        + t[..., _ROW_I, _ROW_J, _COL_L, _COL_K]
        + t[..., _ROW_J, _ROW_I, _COL_L, _COL_K]
    )


def identity_voigt(shape: tuple[int, ...] = ()) -> FloatArray:
    """Second-order identity in Voigt form, broadcast to ``shape + (6,)``."""
    return np.broadcast_to(IDENTITY_VOIGT, (*shape, 6)).copy()


# ── Dense 3x3 helpers ────────────────────────────────────────────────────────


def det3(f: FloatArray) -> FloatArray:
    """Determinant of ``(..., 3, 3)`` matrices by cofactor expansion."""
    return (
        f[..., 0, 0] * (f[..., 1, 1] * f[..., 2, 2] - f[..., 1, 2] * f[..., 2, 1])
        - f[..., 0, 1] * (f[..., 1, 0] * f[..., 2, 2] - f[..., 1, 2] * f[..., 2, 0])
        + f[..., 0, 2] * (f[..., 1, 0] * f[..., 2, 1] - f[..., 1, 1] * f[..., 2, 0])
    )


def mat3_mul(a: FloatArray, b: FloatArray) -> FloatArray:
    """``a @ b`` for ``(..., 3, 3)`` stacks, summed term by term in a fixed order."""
    out = a[..., :, 0, None] * b[..., None, 0, :]
    out = out + a[..., :, 1, None] * b[..., None, 1, :]
    out = out + a[..., :, 2, None] * b[..., None, 2, :]
    return out


def inv3(f: FloatArray, det: FloatArray | None = None) -> FloatArray:
    """Inverse of ``(..., 3, 3)`` matrices via the adjugate."""
    if det is None:
        det = det3(f)
    adj = np.empty(f.shape)
    adj[..., 0, 0] = f[..., 1, 1] * f[..., 2, 2] - f[..., 1, 2] * f[..., 2, 1]
    adj[..., 0, 1] = f[..., 0, 2] * f[..., 2, 1] - f[..., 0, 1] * f[..., 2, 2]
    adj[..., 0, 2] = f[..., 0, 1] * f[..., 1, 2] - f[..., 0, 2] * f[..., 1, 1]
    adj[..., 1, 0] = f[..., 1, 2] * f[..., 2, 0] - f[..., 1, 0] * f[..., 2, 2]
    adj[..., 1, 1] = f[..., 0, 0] * f[..., 2, 2] - f[..., 0, 2] * f[..., 2, 0]
    adj[..., 1, 2] = f[..., 0, 2] * f[..., 1, 0] - f[..., 0, 0] * f[..., 1, 2]
    adj[..., 2, 0] = f[..., 1, 0] * f[..., 2, 1] - f[..., 1, 1] * f[..., 2, 0]
    adj[..., 2, 1] = f[..., 0, 1] * f[..., 2, 0] - f[..., 0, 0] * f[..., 2, 1]
    adj[..., 2, 2] = f[..., 0, 0] * f[..., 1, 1] - f[..., 0, 1] * f[..., 1, 0]
    return adj / det[..., None, None]


def left_cauchy_green(f: FloatArray) -> FloatArray:
    """Voigt form of ``B = F Fᵀ``."""
    out = f[..., VOIGT_I, 0] * f[..., VOIGT_J, 0]
    out = out + f[..., VOIGT_I, 1] * f[..., VOIGT_J, 1]
    out = out + f[..., VOIGT_I, 2] * f[..., VOIGT_J, 2]
    return out


def right_cauchy_green(f: FloatArray) -> FloatArray:
    """Voigt form of ``C = Fᵀ F``."""
    out = f[..., 0, VOIGT_I] * f[..., 0, VOIGT_J]
    out = out + f[..., 1, VOIGT_I] * f[..., 1, VOIGT_J]
    out = out + f[..., 2, VOIGT_I] * f[..., 2, VOIGT_J]
    return out


def sym_trace(v: FloatArray) -> FloatArray:
    """Trace of a Voigt tensor."""
    return v[..., 0] + v[..., 1] + v[..., 2]


def sym_square(v: FloatArray) -> FloatArray:
    """Voigt form of ``A @ A`` for a symmetric ``A`` given in Voigt form."""
    a = from_voigt(v)
    out = a[..., VOIGT_I, 0] * a[..., 0, VOIGT_J]
    out = out + a[..., VOIGT_I, 1] * a[..., 1, VOIGT_J]
    out = out + a[..., VOIGT_I, 2] * a[..., 2, VOIGT_J]
    return out


def sym_matvec(v: FloatArray, x: FloatArray) -> FloatArray:
    """``A @ x`` for a symmetric ``A`` in Voigt form and vectors ``(..., 3)``."""
    a = from_voigt(v)
    out = a[..., :, 0] * x[..., 0, None]
    out = out + a[..., :, 1] * x[..., 1, None]
    out = out + a[..., :, 2] * x[..., 2, None]
    return out


# ── Products ─────────────────────────────────────────────────────────────────


def sym_outer(a: FloatArray, b: FloatArray) -> FloatArray:
    """Voigt form of ``sym(a ⊗ b) = ½(a_i b_j + a_j b_i)``."""
    return 0.5 * (a[..., VOIGT_I] * b[..., VOIGT_J] + a[..., VOIGT_J] * b[..., VOIGT_I])


def tensor_prod(a: FloatArray, b: FloatArray) -> FloatArray:
    """``(A ⊗ B)_ijkl = A_ij B_kl`` in Voigt form."""
    return a[..., :, None] * b[..., None, :]


def tensor_prod_bar(a: FloatArray, b: FloatArray) -> FloatArray:
    """``(A ⊗̄ B)_ijkl = ½(A_ik B_jl + A_il B_kj)`` in Voigt form, for symmetric A, B."""
    af = from_voigt(a)
    bf = from_voigt(b)
    return 0.5 * (
        af[..., _ROW_I, _COL_K] * bf[..., _ROW_J, _COL_L]
        + af[..., _ROW_I, _COL_L] * bf[..., _COL_K, _ROW_J]
    )


# ── Push-forward of inner-network derivatives ────────────────────────────────


def push_forward_stress(dpsi: FloatArray, g: FloatArray) -> FloatArray:
    """Kirchhoff stress ``τ = 2 Σ_m (∂N/∂K_m) G^m``.

    ``dpsi`` has shape ``(..., m)`` and ``g`` shape ``(..., m, 6)``.
    """
    m = dpsi.shape[-1]
    if g.shape[-2] != m:
        raise DimensionMismatchError(
            f"stress push-forward: {m} derivatives but {g.shape[-2]} G-tensors"
        )
    acc = np.zeros(g.shape[:-2] + (6,))
    for k in range(m):
        acc = acc + dpsi[..., k, None] * g[..., k, :]
    return 2.0 * acc


def push_forward_stiffness(
    dpsi: FloatArray, d2psi: FloatArray, g: FloatArray, gg: FloatArray
) -> FloatArray:
    """Spatial stiffness ``𝕔 = 4 Σ_mn (∂²N/∂K_m∂K_n) G^m ⊗ G^n + 4 Σ_m (∂N/∂K_m) 𝔾^m``.

    The result is symmetrised so that major symmetry holds exactly.
    """
    m = dpsi.shape[-1]
    if d2psi.shape[-2:] != (m, m) or g.shape[-2] != m or gg.shape[-3] != m:
        raise DimensionMismatchError(
            f"stiffness push-forward: expected {m} terms, got Hessian {d2psi.shape[-2:]}, "
            f"{g.shape[-2]} G-tensors and {gg.shape[-3]} fourth-order tensors"
        )
    acc = np.zeros(g.shape[:-2] + (6, 6))
    for a in range(m):
        h = np.zeros(g.shape[:-2] + (6,))
        for b in range(m):
            h = h + d2psi[..., a, b, None] * g[..., b, :]
        acc = acc + g[..., a, :, None] * h[..., None, :]
    for a in range(m):
        acc = acc + dpsi[..., a, None, None] * gg[..., a, :, :]
    acc = 4.0 * acc
    return 0.5 * (acc + np.swapaxes(acc, -1, -2))
