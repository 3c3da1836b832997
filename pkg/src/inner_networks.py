"""
Inner networks: value, gradient and Hessian in a single forward pass.

Each evaluator takes kinematic scalars ``k`` of shape ``(..., m)`` and
returns an :class:`~src.models.InnerEval` with value ``(...)``, gradient
``(..., m)`` and Hessian ``(..., m, m)``.  Sums over layer widths, inputs
and basis functions are accumulated one term at a time so every point is
computed with the same operation sequence regardless of batch size.
"""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np

from .constants import (
    CANN_F0,
    CANN_F1,
    CANN_F2,
    FD_GRADIENT_STEP,
    FD_HESSIAN_STEP,
    KNOT_UNIFORMITY_TOL,
)
from .errors import (
    DimensionMismatchError,
    KnotVectorError,
    ModelDefinitionError,
    NetworkDomainError,
)
from .models import (
    CannWeights,
    FloatArray,
    IckanWeights,
    InnerEval,
    InnerWeights,
    MicnnWeights,
)

logger = logging.getLogger(__name__)


def _check_width(k: FloatArray, expected: int, what: str) -> None:
    if k.shape[-1] != expected:
        raise DimensionMismatchError(f"{what} expects {expected} inputs, got {k.shape[-1]}")


def _first_index(mask: FloatArray) -> int:
    return int(np.flatnonzero(np.ravel(mask))[0])


# ── MICNN ────────────────────────────────────────────────────────────────────


def softplus(y: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Softplus ``ln(1 + eʸ)`` with its first and second derivatives, overflow-safe."""
    e = np.exp(-np.abs(y))
    value = np.log1p(e) + np.maximum(y, 0.0)
    sig = np.where(y >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return value, sig, sig * (1.0 - sig)


def validate_micnn(w: MicnnWeights) -> None:
    if not w.b:
        raise ModelDefinitionError("MICNN needs at least one layer")
    if not (len(w.a) == len(w.b) == len(w.c)):
        raise ModelDefinitionError("MICNN a/b/c must list the same number of layers")
    m = w.b[0].shape[1]
    prev_width = 0
    for idx, (a, b, c) in enumerate(zip(w.a, w.b, w.c, strict=True)):
        width = b.shape[0]
        if b.ndim != 2 or b.shape[1] != m:
            raise ModelDefinitionError(f"layer {idx}: b must have shape (width, {m})")
        if c.shape != (width,):
            raise ModelDefinitionError(f"layer {idx}: c must have shape ({width},)")
        if idx == 0 and a is not None:
            raise ModelDefinitionError("layer 0: a must be absent (the first layer sees only K)")
        if idx > 0:
            if a is None or a.shape != (width, prev_width):
                raise ModelDefinitionError(
                    f"layer {idx}: a must have shape ({width}, {prev_width})"
                )
            if np.any(a < 0.0):
                raise ModelDefinitionError(f"layer {idx}: a has negative entries")
        if w.monotone and np.any(b < 0.0):
            raise ModelDefinitionError(f"layer {idx}: b has negative entries in monotone mode")
        prev_width = width
    if prev_width != 1:
        raise ModelDefinitionError(f"MICNN output layer must have width 1, got {prev_width}")


def micnn_eval(w: MicnnWeights, k: FloatArray) -> InnerEval:
    """Forward recursion carrying ``z``, ``∂z/∂K`` and ``∂²z/∂K∂K`` layer by layer.

    Hidden layers apply softplus; the output layer is affine in its inputs.
    """
    k = np.asarray(k, dtype=float)
    m = w.n_inputs
    _check_width(k, m, "MICNN")
    batch = k.shape[:-1]

    z = dz = d2z = None
    visits = 0
    for idx in range(w.n_layers):
        a, b, c = w.a[idx], w.b[idx], w.c[idx]
        width = b.shape[0]
        y = np.broadcast_to(c, (*batch, width)).copy()
        for p in range(m):
            y = y + b[:, p] * k[..., p, None]
        dy = np.broadcast_to(b, (*batch, width, m)).copy()
        d2y = np.zeros((*batch, width, m, m))
        if a is not None:
            for q in range(a.shape[1]):
                y = y + a[:, q] * z[..., q, None]
                dy = dy + a[:, q, None] * dz[..., q, None, :]
                d2y = d2y + a[:, q, None, None] * d2z[..., q, None, :, :]
        visits += 1

        if idx == w.n_layers - 1:
            z, dz, d2z = y, dy, d2y
            break
        s0, s1, s2 = softplus(y)
        outer = dy[..., :, None] * dy[..., None, :]
        z = s0
        dz = s1[..., None] * dy
        d2z = s2[..., None, None] * outer + s1[..., None, None] * d2y

    return InnerEval(value=z[..., 0], grad=dz[..., 0, :], hess=d2z[..., 0, :, :], layer_visits=visits)


# ── CANN ─────────────────────────────────────────────────────────────────────


def validate_cann(w: CannWeights) -> None:
    if not w.branches:
        raise ModelDefinitionError("CANN needs at least one branch")
    for idx, br in enumerate(w.branches):
        if not 0 <= br.input < w.n_inputs:
            raise ModelDefinitionError(f"branch {idx}: input {br.input} out of range")
        if br.f0 not in CANN_F0 or br.f1 not in CANN_F1 or br.f2 not in CANN_F2:
            raise ModelDefinitionError(
                f"branch {idx}: unknown selector in ({br.f0}, {br.f1}, {br.f2})"
            )
        if not all(np.isfinite((br.w0, br.w1, br.w2))):
            raise ModelDefinitionError(f"branch {idx}: weights must be finite")
        if br.w1 < 0.0 or br.w2 < 0.0:
            raise ModelDefinitionError(f"branch {idx}: w1 and w2 must be >= 0")


def _cann_f0(kind: str, x: FloatArray) -> tuple[FloatArray, FloatArray]:
    # kinks get derivative 0
    if kind == "identity":
        return x, np.ones_like(x)
    if kind == "macaulay":
        return np.maximum(x, 0.0), np.where(x > 0.0, 1.0, 0.0)
    return np.abs(x), np.sign(x)


def _cann_f1(kind: str, v: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    if kind == "power1":
        return v, np.ones_like(v), np.zeros_like(v)
    if kind == "power2":
        return v * v, 2.0 * v, np.full_like(v, 2.0)
    return v * v * v, 3.0 * (v * v), 6.0 * v


def _cann_f2(
    kind: str, u: FloatArray, w1: float, branch: int
) -> tuple[FloatArray, FloatArray, FloatArray]:
    if kind == "linear":
        return w1 * u, np.full_like(u, w1), np.zeros_like(u)
    if kind == "exp":
        ex = np.exp(w1 * u)
        return ex - 1.0, w1 * ex, (w1 * w1) * ex
    arg = 1.0 - w1 * u
    bad = ~(arg > 0.0)
    if np.any(bad):
        raise NetworkDomainError(
            f"branch {branch}: log argument 1 - w1*x must stay positive",
            index=_first_index(bad),
        )
    inv = 1.0 / arg
    return -np.log(arg), w1 * inv, (w1 * w1) * (inv * inv)


def cann_eval(w: CannWeights, k: FloatArray) -> InnerEval:
    """Sum of independent branches; the Hessian is diagonal by construction."""
    k = np.asarray(k, dtype=float)
    _check_width(k, w.n_inputs, "CANN")
    batch = k.shape[:-1]
    m = w.n_inputs
    value = np.zeros(batch)
    grad = np.zeros((*batch, m))
    hess = np.zeros((*batch, m, m))

    for idx, br in enumerate(w.branches):
        x = k[..., br.input] - br.w0
        v, dv = _cann_f0(br.f0, x)
        u, du, d2u = _cann_f1(br.f1, v)
        f, df, d2f = _cann_f2(br.f2, u, br.w1, idx)
        chain = du * dv
        value = value + br.w2 * f
        grad[..., br.input] = grad[..., br.input] + br.w2 * (df * chain)
        hess[..., br.input, br.input] = hess[..., br.input, br.input] + br.w2 * (
            d2f * (chain * chain) + df * (d2u * (dv * dv))
        )
    return InnerEval(value=value, grad=grad, hess=hess, layer_visits=1)


# ── ICKAN ────────────────────────────────────────────────────────────────────


def uniform_knots(x_range: tuple[float, float], order: int, n_basis: int) -> FloatArray:
    """Knots ``t_i = x_min + (i - k) h`` for ``i = 0..k + n_b``, ``h = (x_max - x_min)/(n_b - k)``."""
    x_min, x_max = x_range
    h = (x_max - x_min) / (n_basis - order)
    return x_min + (np.arange(order + n_basis + 1) - order) * h


def validate_knots(knots: FloatArray, order: int, n_basis: int) -> None:
    knots = np.asarray(knots, dtype=float)
    if order < 1:
        raise KnotVectorError(f"spline order must be >= 1, got {order}")
    if n_basis <= order:
        raise KnotVectorError(f"need more basis functions ({n_basis}) than the order ({order})")
    if knots.ndim != 1 or knots.size != order + n_basis + 1:
        raise KnotVectorError(
            f"knot vector must have {order + n_basis + 1} entries, got {knots.size}"
        )
    steps = np.diff(knots)
    if np.any(steps <= 0.0):
        raise KnotVectorError("knot vector must be strictly increasing")
    h = steps.mean()
    if np.max(np.abs(steps - h)) > KNOT_UNIFORMITY_TOL * max(1.0, abs(h)):
        raise KnotVectorError("knot vector is not uniform")


def validate_ickan(w: IckanWeights) -> None:
    if not w.layers:
        raise ModelDefinitionError("ICKAN needs at least one layer")
    x_min, x_max = w.x_range
    if not x_max > x_min:
        raise ModelDefinitionError(f"ICKAN range must be increasing, got {w.x_range}")
    validate_knots(ickan_knots(w), w.order, w.n_basis)
    prev = w.layers[0].n_in
    for idx, layer in enumerate(w.layers):
        if layer.n_in != prev:
            raise ModelDefinitionError(f"layer {idx}: expects {prev} inputs, has {layer.n_in}")
        if layer.control.shape != (layer.n_out, layer.n_in, w.n_basis):
            raise ModelDefinitionError(
                f"layer {idx}: control points must have shape "
                f"({layer.n_out}, {layer.n_in}, {w.n_basis})"
            )
        if np.any(layer.weights < 0.0):
            raise ModelDefinitionError(f"layer {idx}: spline weights must be >= 0")
        slopes = np.diff(layer.control, axis=-1)
        if np.any(slopes < -1e-12) or np.any(np.diff(slopes, axis=-1) < -1e-12):
            raise ModelDefinitionError(
                f"layer {idx}: control points must be non-decreasing with non-decreasing increments"
            )
        prev = layer.n_out
    if prev != 1:
        raise ModelDefinitionError(f"ICKAN output layer must have width 1, got {prev}")


def ickan_knots(w: IckanWeights) -> FloatArray:
    if w.knots is not None:
        return np.asarray(w.knots, dtype=float)
    return uniform_knots(w.x_range, w.order, w.n_basis)


def _basis_levels(x: FloatArray, knots: FloatArray, order: int) -> list[FloatArray]:
    """Cox-de Boor recursion; level ``p`` holds the ``len(knots) - 1 - p`` degree-p functions.

    ``x`` must lie in ``[t_k, t_{n_b}]``; the right end belongs to the last interval.
    """
    n_int = knots.size - 1
    n_basis = n_int - order
    h = knots[1] - knots[0]
    span = np.floor((x - knots[order]) / h).astype(np.intp) + order
    span = np.clip(span, order, n_basis - 1)
    basis = (np.arange(n_int) == span[..., None]).astype(float)
    levels = [basis]
    for p in range(1, order + 1):
        lo = knots[: n_int - p]
        hi = knots[p + 1 : n_int + 1]
        left = (x[..., None] - lo) / (knots[p:n_int] - lo)
        right = (hi - x[..., None]) / (hi - knots[1 : n_int - p + 1])
        basis = left * basis[..., :-1] + right * basis[..., 1:]
        levels.append(basis)
    return levels


def bspline_basis(x: FloatArray, knots: FloatArray, order: int) -> FloatArray:
    """Degree-``order`` B-spline basis values ``(..., n_b)`` at ``x``."""
    return _basis_levels(np.asarray(x, dtype=float), np.asarray(knots, dtype=float), order)[-1]


def _spline_terms(
    x: FloatArray, control: FloatArray, knots: FloatArray, order: int, extrapolation: str
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Value and derivatives of the splines ``control`` ``(n_out, n_b)`` at ``x`` ``(...)``.

    Derivative control points follow the derivative recurrence, which on a
    uniform grid reduces to forward differences divided by ``h``.
    """
    n_basis = control.shape[-1]
    lo, hi = knots[order], knots[n_basis]
    h = knots[1] - knots[0]
    xc = np.clip(x, lo, hi)
    levels = _basis_levels(xc, knots, order)
    b0 = levels[order]
    b1 = levels[order - 1]

    d1 = (control[:, 1:] - control[:, :-1]) / h
    s0 = np.zeros((*x.shape, control.shape[0]))
    for i in range(n_basis):
        s0 = s0 + control[:, i] * b0[..., i, None]
    s1 = np.zeros_like(s0)
    for i in range(n_basis - 1):
        s1 = s1 + d1[:, i] * b1[..., i + 1, None]
    s2 = np.zeros_like(s0)
    if order >= 2:
        b2 = levels[order - 2]
        d2 = (d1[:, 1:] - d1[:, :-1]) / h
        for i in range(n_basis - 2):
            s2 = s2 + d2[:, i] * b2[..., i + 2, None]

    outside = (x < lo) | (x > hi)
    if extrapolation == "clamp":
        s1 = np.where(outside[..., None], 0.0, s1)
    else:
        s0 = s0 + s1 * (x - xc)[..., None]
    s2 = np.where(outside[..., None], 0.0, s2)
    return s0, s1, s2


def ickan_eval(w: IckanWeights, k: FloatArray) -> InnerEval:
    """Layers of weighted edge splines composed by the chain rule."""
    k = np.asarray(k, dtype=float)
    _check_width(k, w.n_inputs, "ICKAN")
    knots = ickan_knots(w)
    batch = k.shape[:-1]
    m = k.shape[-1]

    x = k
    dx = np.broadcast_to(np.eye(m), (*batch, m, m)).copy()
    d2x = np.zeros((*batch, m, m, m))
    visits = 0
    for layer in w.layers:
        z = np.zeros((*batch, layer.n_out))
        dz = np.zeros((*batch, layer.n_out, m))
        d2z = np.zeros((*batch, layer.n_out, m, m))
        for j in range(layer.n_in):
            xj = x[..., j]
            s0, s1, s2 = (
                s.reshape(*xj.shape, layer.n_out)
                for s in _spline_terms(
                    np.ascontiguousarray(xj).reshape(-1), layer.control[:, j, :], knots, w.order,
                    w.extrapolation,
                )
            )
            wj = layer.weights[:, j]
            dxj = dx[..., j, :]
            outer = dxj[..., :, None] * dxj[..., None, :]
            z = z + wj * s0
            dz = dz + (wj * s1)[..., None] * dxj[..., None, :]
            d2z = d2z + (wj * s2)[..., None, None] * outer[..., None, :, :]
            d2z = d2z + (wj * s1)[..., None, None] * d2x[..., j, None, :, :]
        x, dx, d2x = z, dz, d2z
        visits += 1
    return InnerEval(value=x[..., 0], grad=dx[..., 0, :], hess=d2x[..., 0, :, :], layer_visits=visits)


# ── Analytic reference and dispatch ──────────────────────────────────────────


def gent_thomas_inner(k: FloatArray) -> InnerEval:
    """``0.5 (K0 - 3) + ln(K1 / 3) + (K2 - 1)²`` on (Ī1, Ī2, J)."""
    k = np.asarray(k, dtype=float)
    _check_width(k, 3, "Gent-Thomas")
    i1, i2, j = k[..., 0], k[..., 1], k[..., 2]
    if np.any(~(i2 > 0.0)):
        raise NetworkDomainError("Gent-Thomas requires a positive second invariant",
                                 index=_first_index(~(i2 > 0.0)))
    batch = k.shape[:-1]
    dj = j - 1.0
    value = 0.5 * (i1 - 3.0) + np.log(i2 / 3.0) + dj * dj
    inv = 1.0 / i2
    grad = np.zeros((*batch, 3))
    grad[..., 0] = 0.5
    grad[..., 1] = inv
    grad[..., 2] = 2.0 * dj
    hess = np.zeros((*batch, 3, 3))
    hess[..., 1, 1] = -(inv * inv)
    hess[..., 2, 2] = 2.0
    return InnerEval(value=value, grad=grad, hess=hess, layer_visits=1)


def validate_inner(architecture: str, weights: InnerWeights) -> None:
    if architecture == "micnn" and isinstance(weights, MicnnWeights):
        validate_micnn(weights)
    elif architecture == "cann" and isinstance(weights, CannWeights):
        validate_cann(weights)
    elif architecture == "ickan" and isinstance(weights, IckanWeights):
        validate_ickan(weights)
    elif architecture != "gent-thomas":
        raise ModelDefinitionError(
            f"architecture {architecture!r} does not match weights {type(weights).__name__}"
        )


def inner_width(architecture: str, weights: InnerWeights) -> int:
    if architecture == "gent-thomas" or weights is None:
        return 3
    return weights.n_inputs


def eval_inner(architecture: str, weights: InnerWeights, k: FloatArray) -> InnerEval:
    if architecture == "micnn":
        return micnn_eval(weights, k)  # type: ignore[arg-type]
    if architecture == "cann":
        return cann_eval(weights, k)  # type: ignore[arg-type]
    if architecture == "ickan":
        return ickan_eval(weights, k)  # type: ignore[arg-type]
    return gent_thomas_inner(k)


def inner_value(architecture: str, weights: InnerWeights) -> Callable[[FloatArray], FloatArray]:
    """Value-only closure over a network, the form :func:`fd_oracle` consumes."""
    return lambda k: eval_inner(architecture, weights, k).value


# ── Finite-difference oracle ─────────────────────────────────────────────────


def fd_stencil(m: int, h: FloatArray, hh: FloatArray) -> FloatArray:
    """Perturbations ``(2 m² + 1, ..., m)``: centre, ±h_i, ±hh_i, then the four corners per i < j.

    ``h`` and ``hh`` are the per-component gradient and Hessian steps with shape ``(..., m)``.
    """
    rows = [np.zeros_like(h)]
    eye = np.eye(m)
    for i in range(m):
        rows.append(eye[i] * h)
        rows.append(-eye[i] * h)
    for i in range(m):
        rows.append(eye[i] * hh)
        rows.append(-eye[i] * hh)
    for i in range(m):
        for j in range(i + 1, m):
            for si, sj in ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)):
                rows.append(si * eye[i] * hh + sj * eye[j] * hh)
    return np.stack(rows)


def fd_combine(values: FloatArray, m: int, h: FloatArray, hh: FloatArray) -> InnerEval:
    """Turn stencil values ``(2 m² + 1, ...)`` into a central-difference :class:`InnerEval`."""
    centre = values[0]
    grad = np.zeros((*centre.shape, m))
    hess = np.zeros((*centre.shape, m, m))
    for i in range(m):
        grad[..., i] = (values[1 + 2 * i] - values[2 + 2 * i]) / (2.0 * h[..., i])
    base = 1 + 2 * m
    for i in range(m):
        plus, minus = values[base + 2 * i], values[base + 2 * i + 1]
        hess[..., i, i] = (plus - 2.0 * centre + minus) / (hh[..., i] * hh[..., i])
    row = base + 2 * m
    for i in range(m):
        for j in range(i + 1, m):
            pp, pm, mp, mm = values[row], values[row + 1], values[row + 2], values[row + 3]
            entry = (pp - pm - mp + mm) / (4.0 * hh[..., i] * hh[..., j])
            hess[..., i, j] = entry
            hess[..., j, i] = entry
            row += 4
    return InnerEval(value=centre, grad=grad, hess=hess, layer_visits=0)


def fd_oracle(
    func: Callable[[FloatArray], FloatArray],
    k: FloatArray,
    h: float = FD_GRADIENT_STEP,
    hess_h: float | None = None,
) -> InnerEval:
    """Central-difference value, gradient and Hessian of a scalar function.

    Steps are relative: ``h * max(1, |K_i|)``.  All ``2 m² + 1`` perturbed
    inputs are evaluated in one call of ``func`` on a stacked array.
    """
    if h <= 0.0:
        raise ValueError(f"finite-difference step must be > 0, got {h}")
    k = np.asarray(k, dtype=float)
    m = k.shape[-1]
    scale = np.maximum(1.0, np.abs(k))
    step = h * scale
    hess_step = (FD_HESSIAN_STEP if hess_h is None else hess_h) * scale
    stencil = fd_stencil(m, step, hess_step)
    values = func(k[None, ...] + stencil)
    return fd_combine(values, m, step, hess_step)
