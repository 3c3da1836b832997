"""
Oracle and property checks behind ``ncm-fe verify``.

Each check returns a :class:`~src.schemas.VerifyCheck` with the largest
observed error and the tolerance it was held to; :func:`run_verify`
collects them into a :class:`~src.schemas.VerifyReport`.  A check that
raises is reported as failed with the exception text.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import replace

import numpy as np
from scipy.spatial.transform import Rotation

from .assembly import assemble, assemble_energy, build_pattern, compute_trial_F
from .benchmarks import random_deformations, version_string
from .constants import DEFAULT_SEED, LOADING_PATHS, QP_PER_ELEMENT
from .constitutive import eval_point, eval_sweep, gent_thomas_definition, path_scan
from .errors import NcmFeError, WeightFileError
from .inner_networks import bspline_basis, eval_inner, ickan_knots
from .kinematics import eval_kinematics
from .mesh import build_dofmap, build_quad_cache, build_structured_cube, twist_cube_model
from .models import CannWeights, FeModel, FloatArray, IckanWeights, MicnnWeights, NcmDefinition
from .schemas import VerifyCheck, VerifyReport
from .tensors import from_voigt, to_voigt
from .weights import bundled_weight_files, load_model, parse_weight_document, synthesize_weights

logger = logging.getLogger(__name__)

TAU_TOL = 1e-5
STIFFNESS_TOL = 1e-3
OBJECTIVITY_TOL = 1e-9
ANCHOR_TOL = 1e-12
DILATION_TOL = 1e-10
TANGENT_TOL = 1e-5
PATCH_TOL = 1e-10
CONVEXITY_TOL = 1e-10
CONVEXITY_SETS = 200
CGO_FD_TRIPLES = 100
PARTITION_TOL = 1e-12


def _rel_error(a: FloatArray, b: FloatArray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _check(name: str, tolerance: float, fn: Callable[[], tuple[float, str]]) -> VerifyCheck:
    try:
        error, detail = fn()
    except NcmFeError as exc:
        logger.warning("verify %s raised: %s", name, exc)
        return VerifyCheck(name=name, passed=False, tolerance=tolerance, detail=str(exc))
    passed = bool(np.isfinite(error) and error <= tolerance)
    log = logger.info if passed else logger.warning
    log("verify %s: max error %.3e (tolerance %.1e)", name, error, tolerance)
    return VerifyCheck(name=name, passed=passed, max_error=error, tolerance=tolerance, detail=detail)


# ── Material-point checks ────────────────────────────────────────────────────


def cgo_vs_fd(model: NcmDefinition, f: FloatArray) -> tuple[float, float]:
    """Largest relative τ and 𝕔 errors of the analytic path against finite differences."""
    _, tau, c = eval_sweep(model, f, f.shape[0])
    fd_model = replace(model, derivative_mode="fd")
    _, tau_fd, c_fd = eval_sweep(fd_model, f, f.shape[0])
    return _rel_error(tau, tau_fd), _rel_error(c, c_fd)


def batch_point_mismatches(model: NcmDefinition, f: FloatArray) -> int:
    """Count of points whose batched result differs bitwise from ``eval_point``."""
    psi, tau, c = eval_sweep(model, f, f.shape[0])
    bad = 0
    for i in range(f.shape[0]):
        p, t, s = eval_point(model, f[i])
        if p != psi[i] or not np.array_equal(t, tau[i]) or not np.array_equal(s, c[i]):
            bad += 1
    return bad


def objectivity_error(model: NcmDefinition, f: FloatArray, rng: np.random.Generator) -> float:
    """Largest relative deviation of Ψ(QF) from Ψ(F) and of τ(QF) from Q τ(F) Qᵀ."""
    q = Rotation.random(f.shape[0], rng).as_matrix()
    psi, tau, _ = eval_sweep(model, f, f.shape[0])
    psi_q, tau_q, _ = eval_sweep(model, np.einsum("nij,njk->nik", q, f), f.shape[0])

    rotated = to_voigt(np.einsum("nij,njk,nlk->nil", q, from_voigt(tau), q))
    return max(_rel_error(psi_q, psi), _rel_error(tau_q, rotated))


def _is_monotone(model: NcmDefinition) -> bool:
    return isinstance(model.weights, IckanWeights) or (
        isinstance(model.weights, MicnnWeights) and model.weights.monotone
    )


def convexity_violation(model: NcmDefinition, f: FloatArray, rng: np.random.Generator) -> float:
    """Largest relative breach of convexity of 𝒩 and, for monotone nets, of 𝒩(K + Δ) ≥ 𝒩(K).

    Convexity is held to both the secant inequality
    ``𝒩(y) ≥ 𝒩(x) + ∇𝒩(x)·(y − x)`` and the chord inequality at a random
    ``t`` in [0, 1].  Pairs ``(x, y)`` are kinematic outputs of ``f`` and of
    a shuffled copy; increments ``Δ`` are non-negative.
    """
    x = eval_kinematics(f, model.kinematics).values
    y = x[rng.permutation(x.shape[0])]
    at_x = eval_inner(model.architecture, model.weights, x)
    at_y = eval_inner(model.architecture, model.weights, y)
    gap = at_x.value + np.einsum("ni,ni->n", at_x.grad, y - x) - at_y.value
    worst = max(0.0, float(np.max(gap / np.maximum(1.0, np.abs(at_y.value)))))
    t = rng.uniform(0.0, 1.0, x.shape[0])
    mid = eval_inner(model.architecture, model.weights, t[:, None] * x + (1.0 - t[:, None]) * y)
    chord = t * at_x.value + (1.0 - t) * at_y.value
    worst = max(worst, float(np.max((mid.value - chord) / np.maximum(1.0, np.abs(chord)))))
    if _is_monotone(model):
        shifted = eval_inner(model.architecture, model.weights, x + rng.uniform(0.0, 0.5, x.shape))
        drop = (at_x.value - shifted.value) / np.maximum(1.0, np.abs(at_x.value))
        worst = max(worst, float(np.max(drop)))
    return worst


def _seeded_model(architecture: str, seed: int, index: int) -> tuple[NcmDefinition, np.random.Generator]:
    rng = np.random.default_rng([seed, index])
    return synthesize_weights(architecture, rng=rng), rng


def random_weight_convexity(architecture: str, n_sets: int, seed: int, n_pairs: int = 20) -> float:
    """Worst :func:`convexity_violation` over ``n_sets`` independently seeded weight sets."""
    worst = 0.0
    for i in range(n_sets):
        model, rng = _seeded_model(architecture, seed, i)
        worst = max(worst, convexity_violation(model, random_deformations(n_pairs, rng), rng))
    return worst


def random_weight_cgo_vs_fd(architecture: str, n_triples: int, seed: int) -> tuple[float, float]:
    """Worst τ and 𝕔 errors of :func:`cgo_vs_fd` over ``n_triples`` seeded (weights, F) draws."""
    tau_worst = c_worst = 0.0
    for i in range(n_triples):
        model, rng = _seeded_model(architecture, seed, i)
        tau_err, c_err = cgo_vs_fd(model, random_deformations(1, rng))
        tau_worst, c_worst = max(tau_worst, tau_err), max(c_worst, c_err)
    return tau_worst, c_worst


def cann_offdiagonal(model: NcmDefinition, f: FloatArray) -> float:
    kin = eval_kinematics(f, model.kinematics)
    hess = eval_inner(model.architecture, model.weights, kin.values).hess
    m = hess.shape[-1]
    return float(np.max(np.abs(hess * (1.0 - np.eye(m))))) if m > 1 else 0.0


def partition_of_unity_error(weights: IckanWeights, n: int = 1000) -> float:
    x = np.linspace(weights.x_range[0], weights.x_range[1], n)
    basis = bspline_basis(x, ickan_knots(weights), weights.order)
    return float(np.max(np.abs(basis.sum(axis=-1) - 1.0)))


def gent_thomas_anchor_error() -> tuple[float, float]:
    """Errors of Ψ(I)=0, τ(I)=0 and of Ψ(2I)=49."""
    psi0, tau0, _ = eval_point(gent_thomas_definition(), np.eye(3))
    psi2, _, _ = eval_point(gent_thomas_definition(), 2.0 * np.eye(3))
    return max(abs(psi0), float(np.max(np.abs(tau0)))), abs(psi2 - 49.0)


def reference_agreement(model: NcmDefinition, gamma_max: float = 0.5, steps: int = 10) -> float:
    """Largest |Ψ_model - Ψ_Gent-Thomas| along the six loading paths."""
    worst = 0.0
    reference = gent_thomas_definition()
    for path in LOADING_PATHS:
        rows = path_scan(model, path, gamma_max, steps)
        ref = path_scan(reference, path, gamma_max, steps)
        worst = max(worst, max(abs(a.psi - b.psi) for a, b in zip(rows, ref, strict=True)))
    return worst


# ── FE checks ────────────────────────────────────────────────────────────────


def random_displacement(fe: FeModel, rng: np.random.Generator, scale: float = 0.02) -> FloatArray:
    return scale * rng.standard_normal(fe.dofmap.n_dofs)


def assembly_mismatches(model: NcmDefinition, fe: FeModel, u: FloatArray) -> list[str]:
    """Labels of assembly variants whose ``(K, r)`` differ bitwise from the traditional loop."""
    pattern = build_pattern(fe)
    k_ref, r_ref = assemble(model, fe, u, "trad", pattern=pattern)
    n_qp = fe.mesh.n_elements * QP_PER_ELEMENT
    variants = [("global", 1, 1)]
    variants += [("batch", b, 1) for b in sorted({1, min(497, n_qp), n_qp})]
    variants += [("partitioned", 64, w) for w in (1, 2, 4)]
    bad = []
    for mode, n_batch, workers in variants:
        k, r = assemble(model, fe, u, mode, n_batch=n_batch, n_workers=workers, pattern=pattern)
        if not (np.array_equal(k.data, k_ref.data) and np.array_equal(r, r_ref)):
            bad.append(f"{mode}(batch={n_batch}, workers={workers})")
    return bad


def tangent_error(
    model: NcmDefinition, fe: FeModel, u: FloatArray, rng: np.random.Generator, columns: int = 20, h: float = 1e-6
) -> float:
    """Relative difference between sampled columns of K and central differences of r."""
    pattern = build_pattern(fe)
    k, _ = assemble(model, fe, u, "batch", n_batch=QP_PER_ELEMENT * fe.mesh.n_elements, pattern=pattern)
    dense_cols = rng.choice(fe.dofmap.n_dofs, size=min(columns, fe.dofmap.n_dofs), replace=False)
    worst = 0.0
    for j in dense_cols:
        e = np.zeros(fe.dofmap.n_dofs)
        e[j] = h
        _, r_plus = assemble(model, fe, u + e, "global", pattern=pattern)
        _, r_minus = assemble(model, fe, u - e, "global", pattern=pattern)
        fd = (r_plus - r_minus) / (2.0 * h)
        col = k[:, [j]].toarray().ravel()
        worst = max(worst, float(np.max(np.abs(col - fd)) / max(float(np.max(np.abs(col))), 1e-30)))
    return worst


def energy_gradient_error(model: NcmDefinition, fe: FeModel, u: FloatArray, h: float = 1e-6) -> float:
    """Relative difference between r and the gradient of the total energy, on every DOF."""
    _, r = assemble(model, fe, u, "global")
    fd = np.empty_like(r)
    for j in range(r.size):
        e = np.zeros_like(u)
        e[j] = h
        fd[j] = (assemble_energy(model, fe, u + e) - assemble_energy(model, fe, u - e)) / (2.0 * h)
    return float(np.max(np.abs(r - fd)) / max(float(np.max(np.abs(r))), 1e-30))


def patch_test_error(model: NcmDefinition, n: int, h_matrix: FloatArray) -> tuple[float, float]:
    """Spread of F and largest interior residual for ``u(X) = H X`` on an ``n``-cube."""
    mesh = build_structured_cube(n)
    fe = FeModel(mesh=mesh, cache=build_quad_cache(mesh), dofmap=build_dofmap(mesh))
    u = (mesh.nodes @ h_matrix.T).ravel()
    expected = np.eye(3) + h_matrix
    spread = 0.0
    for e in range(mesh.n_elements):
        for q in range(QP_PER_ELEMENT):
            spread = max(spread, float(np.max(np.abs(compute_trial_F(fe, u, e, q) - expected))))
    _, r = assemble(model, fe, u, "global")
    boundary = np.zeros(mesh.n_nodes, dtype=bool)
    for nodes in mesh.node_sets.values():
        boundary[nodes] = True
    interior = np.flatnonzero(~boundary)
    r_int = r.reshape(-1, 3)[interior]
    return spread, float(np.max(np.abs(r_int))) if r_int.size else 0.0


def corrupted_weight_rejection() -> tuple[float, str]:
    """Flip an output-layer ``a`` entry of the bundled MICNN negative; expect a field-path error."""
    path = bundled_weight_files()["micnn-example"]
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    doc["layers"][-1]["a"][0][0] = -1.0
    location = f"layers[{len(doc['layers']) - 1}].a"
    try:
        parse_weight_document(doc)
    except WeightFileError as exc:
        ok = str(exc).startswith(location)
        return (0.0 if ok else 1.0), str(exc)
    return 1.0, "corrupted weight file was accepted"


# ── Suite ────────────────────────────────────────────────────────────────────


def verify_models(seed: int, extra: NcmDefinition | None = None) -> list[NcmDefinition]:
    """Bundled examples, one seeded random model per architecture, and ``extra``."""
    rng = np.random.default_rng(seed)
    models = [load_model(name) for name in bundled_weight_files()]
    models += [synthesize_weights(arch, rng=rng) for arch in ("micnn", "cann", "ickan")]
    if extra is not None:
        models.append(extra)
    return models


def run_verify(
    model: NcmDefinition | None = None, seed: int = DEFAULT_SEED, quick: bool = False
) -> VerifyReport:
    """Run every property check; ``quick`` shrinks sample counts and meshes.

    FE checks use ``model`` when given, otherwise the Gent-Thomas reference.
    """
    rng = np.random.default_rng(seed)
    n_samples = 20 if quick else 100
    fe_n = 2 if quick else 4
    checks: list[VerifyCheck] = []

    anchor, dilation = gent_thomas_anchor_error()
    checks.append(_check("gent_thomas_reference", ANCHOR_TOL, lambda: (anchor, "psi(I), tau(I)")))
    checks.append(_check("gent_thomas_dilation", DILATION_TOL, lambda: (dilation, "psi(2I) = 49")))

    for m in [gent_thomas_definition(), *verify_models(seed, model)]:
        label = m.name or m.architecture
        f = random_deformations(n_samples, rng)
        errors: dict[str, float] = {}

        def stress_check(m: NcmDefinition = m, f: FloatArray = f, errors: dict = errors) -> tuple[float, str]:
            errors["tau"], errors["stiffness"] = cgo_vs_fd(m, f)
            return errors["tau"], f"{f.shape[0]} random points"

        checks.append(_check(f"cgo_vs_fd_stress[{label}]", TAU_TOL, stress_check))
        checks.append(
            _check(
                f"cgo_vs_fd_stiffness[{label}]",
                STIFFNESS_TOL,
                lambda errors=errors: (errors.get("stiffness", float("inf")), ""),
            )
        )
        checks.append(
            _check(
                f"batch_equals_point[{label}]",
                0.0,
                lambda m=m, f=f: (float(batch_point_mismatches(m, f[:10])), "points differing bitwise"),
            )
        )
        checks.append(
            _check(
                f"objectivity[{label}]",
                OBJECTIVITY_TOL,
                lambda m=m, f=f: (objectivity_error(m, f, rng), "random rotations"),
            )
        )
        if isinstance(m.weights, MicnnWeights | IckanWeights):
            checks.append(
                _check(
                    f"convexity[{label}]",
                    CONVEXITY_TOL,
                    lambda m=m, f=f: (convexity_violation(m, f, rng), "secant and monotonicity"),
                )
            )
        if isinstance(m.weights, CannWeights):
            checks.append(
                _check(f"cann_hessian_diagonal[{label}]", 0.0, lambda m=m, f=f: (cann_offdiagonal(m, f), ""))
            )
        if isinstance(m.weights, IckanWeights):
            checks.append(
                _check(
                    f"partition_of_unity[{label}]",
                    PARTITION_TOL,
                    lambda w=m.weights: (partition_of_unity_error(w), "1000-point scan"),
                )
            )
        if m.reference_tolerance is not None:
            checks.append(
                _check(
                    f"reference_agreement[{label}]",
                    m.reference_tolerance,
                    lambda m=m: (reference_agreement(m), "six loading paths, gamma <= 0.5"),
                )
            )

    n_sets = 20 if quick else CONVEXITY_SETS
    for arch in ("micnn", "ickan"):
        checks.append(
            _check(
                f"convexity_random_weights[{arch}]",
                CONVEXITY_TOL,
                lambda arch=arch: (random_weight_convexity(arch, n_sets, seed), f"{n_sets} weight sets"),
            )
        )

    n_triples = 10 if quick else CGO_FD_TRIPLES
    for arch in ("micnn", "cann", "ickan"):
        triples: dict[str, float] = {}

        def triple_check(arch: str = arch, triples: dict = triples) -> tuple[float, str]:
            triples["tau"], triples["stiffness"] = random_weight_cgo_vs_fd(arch, n_triples, seed)
            return triples["tau"], f"{n_triples} (weights, F) draws"

        checks.append(_check(f"cgo_vs_fd_random_weights_stress[{arch}]", TAU_TOL, triple_check))
        checks.append(
            _check(
                f"cgo_vs_fd_random_weights_stiffness[{arch}]",
                STIFFNESS_TOL,
                lambda triples=triples: (triples.get("stiffness", float("inf")), ""),
            )
        )

    checks.append(_check("weight_file_rejection", 0.0, corrupted_weight_rejection))

    fe_model = model or gent_thomas_definition()
    fe = twist_cube_model(fe_n)
    u = random_displacement(fe, rng)

    def equality() -> tuple[float, str]:
        bad = assembly_mismatches(fe_model, fe, u)
        return float(len(bad)), ", ".join(bad) or f"n={fe_n} cube"

    checks.append(_check("assembly_equality", 0.0, equality))

    small = twist_cube_model(1 if quick else 2)
    u_small = random_displacement(small, rng)
    checks.append(
        _check(
            "tangent_consistency",
            TANGENT_TOL,
            lambda: (tangent_error(fe_model, small, u_small, rng), "20 sampled columns"),
        )
    )
    single = twist_cube_model(1)
    u_single = random_displacement(single, rng)
    checks.append(
        _check("energy_gradient", TANGENT_TOL, lambda: (energy_gradient_error(fe_model, single, u_single), ""))
    )

    h_matrix = 0.05 * rng.standard_normal((3, 3))

    def patch() -> tuple[float, str]:
        spread, residual = patch_test_error(gent_thomas_definition(), 3, h_matrix)
        return max(spread, residual), f"F spread {spread:.2e}, interior residual {residual:.2e}"

    checks.append(_check("patch_test", PATCH_TOL, patch))

    passed = all(c.passed for c in checks)
    logger.info("verify: %d/%d checks passed", sum(c.passed for c in checks), len(checks))
    return VerifyReport(version=version_string(), passed=passed, checks=checks)
