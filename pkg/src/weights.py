"""
Weight files: load, validate, save and synthesize NCM definitions.

Weight files are JSON documents validated by :mod:`src.schemas`.  Every
rejection is raised as :class:`~src.errors.WeightFileError` whose message
starts with the path of the offending field, e.g.
``layers[1].a: entries must be >= 0, found -0.3``.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import replace

import numpy as np
from pydantic import TypeAdapter, ValidationError

from .constants import (
    BUNDLED_WEIGHTS_DIR,
    GENT_THOMAS_MODEL,
    ICKAN_DEFAULT_BASIS,
    ICKAN_DEFAULT_ORDER,
    ICKAN_DEFAULT_RANGE,
)
from .constitutive import gent_thomas_definition, reference_state, validate_definition
from .errors import KnotVectorError, ModelDefinitionError, NcmFeError, WeightFileError
from .inner_networks import validate_knots
from .kinematics import parse_invariant, validate_config
from .models import (
    CannBranch,
    CannWeights,
    IckanLayer,
    IckanWeights,
    KinematicConfig,
    MicnnWeights,
    NcmDefinition,
)
from .schemas import (
    CannBranchSpec,
    CannFile,
    IckanFile,
    IckanLayerSpec,
    KinematicSpec,
    MicnnFile,
    MicnnLayerSpec,
    WeightFile,
)

logger = logging.getLogger(__name__)

_ADAPTER: TypeAdapter[MicnnFile | CannFile | IckanFile] = TypeAdapter(WeightFile)


def format_loc(loc: tuple[int | str, ...]) -> str:
    """``("micnn", "layers", 1, "a", 0)`` -> ``layers[1].a[0]`` (the union tag is dropped)."""
    parts: list[str] = []
    for i, item in enumerate(loc):
        if i == 0 and item in ("micnn", "cann", "ickan"):
            continue
        if isinstance(item, int):
            if parts:
                parts[-1] += f"[{item}]"
            else:
                parts.append(f"[{item}]")
        else:
            parts.append(str(item))
    return ".".join(parts)


# ── Structural checks the schema cannot express ──────────────────────────────


def _matrix(rows: list[list[float]], path: str) -> np.ndarray:
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise WeightFileError(path, "rows must all have the same length")
    return np.asarray(rows, dtype=float)


def _check_finite(arr: np.ndarray, path: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise WeightFileError(path, "values must be finite")


def _kinematics_from_spec(spec: KinematicSpec) -> KinematicConfig:
    for i, name in enumerate(spec.invariants):
        try:
            parse_invariant(name)
        except ModelDefinitionError as exc:
            raise WeightFileError(f"kinematic.invariants[{i}]", str(exc)) from None
    vectors = np.asarray(spec.structural_vectors, dtype=float).reshape(-1, 3)
    return KinematicConfig(
        variant=spec.variant,
        invariants=tuple(spec.invariants),
        structural_vectors=vectors,
        allow_cross_pairs=spec.allow_cross_pairs,
    )


def _micnn_from_file(doc: MicnnFile, m: int) -> MicnnWeights:
    a_list, b_list, c_list = [], [], []
    prev = 0
    for idx, layer in enumerate(doc.layers):
        base = f"layers[{idx}]"
        b = _matrix(layer.b, f"{base}.b")
        c = np.asarray(layer.c, dtype=float)
        if b.shape[1] != m:
            raise WeightFileError(f"{base}.b", f"expected {m} columns (kinematic width), got {b.shape[1]}")
        if c.shape != (b.shape[0],):
            raise WeightFileError(f"{base}.c", f"expected {b.shape[0]} entries, got {c.size}")
        if doc.monotone and np.any(b < 0.0):
            raise WeightFileError(f"{base}.b", "entries must be >= 0 in monotone mode")
        if idx == 0:
            if layer.a is not None:
                raise WeightFileError(f"{base}.a", "must be omitted on the first layer")
            a = None
        else:
            if layer.a is None:
                raise WeightFileError(f"{base}.a", "required after the first layer")
            a = _matrix(layer.a, f"{base}.a")
            if a.shape != (b.shape[0], prev):
                raise WeightFileError(f"{base}.a", f"expected shape ({b.shape[0]}, {prev}), got {a.shape}")
            _check_finite(a, f"{base}.a")
        _check_finite(b, f"{base}.b")
        _check_finite(c, f"{base}.c")
        a_list.append(a)
        b_list.append(b)
        c_list.append(c)
        prev = b.shape[0]
    if prev != 1:
        raise WeightFileError(f"layers[{len(doc.layers) - 1}].b", "output layer must have one row")
    return MicnnWeights(a=tuple(a_list), b=tuple(b_list), c=tuple(c_list), monotone=doc.monotone)


def _cann_from_file(doc: CannFile, m: int) -> CannWeights:
    branches = []
    for idx, br in enumerate(doc.branches):
        if br.input >= m:
            raise WeightFileError(f"branches[{idx}].input", f"must be < {m} (kinematic width)")
        branches.append(CannBranch(**br.model_dump()))
    return CannWeights(n_inputs=m, branches=tuple(branches))


def _ickan_from_file(doc: IckanFile, m: int) -> IckanWeights:
    layers = []
    prev = m
    n_basis = None
    for idx, layer in enumerate(doc.layers):
        base = f"layers[{idx}]"
        weights = _matrix(layer.weights, f"{base}.weights")
        control = np.asarray(layer.control, dtype=float) if _ragged_ok(layer.control) else None
        if control is None or control.ndim != 3:
            raise WeightFileError(f"{base}.control", "must be a [out][in][basis] array")
        if weights.shape[1] != prev:
            raise WeightFileError(f"{base}.weights", f"expected {prev} columns, got {weights.shape[1]}")
        if control.shape[:2] != weights.shape:
            raise WeightFileError(f"{base}.control", f"leading shape must be {weights.shape}")
        if n_basis is None:
            n_basis = control.shape[2]
        elif control.shape[2] != n_basis:
            raise WeightFileError(f"{base}.control", f"every spline needs {n_basis} control points")
        slopes = np.diff(control, axis=-1)
        if np.any(slopes < -1e-12):
            raise WeightFileError(f"{base}.control", "control points must be non-decreasing")
        if np.any(np.diff(slopes, axis=-1) < -1e-12):
            raise WeightFileError(f"{base}.control", "control-point increments must be non-decreasing")
        _check_finite(control, f"{base}.control")
        layers.append(IckanLayer(weights=weights, control=control))
        prev = weights.shape[0]
    if prev != 1:
        raise WeightFileError(f"layers[{len(doc.layers) - 1}].weights", "output layer must have one row")

    knots = None
    if doc.knots is not None:
        knots = np.asarray(doc.knots, dtype=float)
        try:
            validate_knots(knots, doc.order, int(n_basis))
        except KnotVectorError as exc:
            raise WeightFileError("knots", str(exc)) from None
    elif not doc.x_range[1] > doc.x_range[0]:
        raise WeightFileError("x_range", "upper bound must exceed lower bound")
    return IckanWeights(
        layers=tuple(layers),
        order=doc.order,
        x_range=(float(doc.x_range[0]), float(doc.x_range[1])),
        knots=knots,
        extrapolation=doc.extrapolation,
    )


def _ragged_ok(control: list[list[list[float]]]) -> bool:
    lengths = {len(row) for out in control for row in out}
    inner = {len(out) for out in control}
    return len(lengths) == 1 and len(inner) == 1


# ── Public API ───────────────────────────────────────────────────────────────


def parse_weight_document(data: object) -> NcmDefinition:
    """Validate a decoded JSON document and build the model it describes."""
    try:
        doc = _ADAPTER.validate_python(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise WeightFileError(format_loc(tuple(err["loc"])), err["msg"]) from None

    kinematics = _kinematics_from_spec(doc.kinematic)
    try:
        validate_config(kinematics)
    except ModelDefinitionError as exc:
        raise WeightFileError("kinematic", str(exc)) from None
    m = kinematics.width
    if isinstance(doc, MicnnFile):
        weights: MicnnWeights | CannWeights | IckanWeights = _micnn_from_file(doc, m)
    elif isinstance(doc, CannFile):
        weights = _cann_from_file(doc, m)
    else:
        weights = _ickan_from_file(doc, m)

    model = NcmDefinition(
        kinematics=kinematics,
        architecture=doc.architecture,
        weights=weights,
        derivative_mode=doc.derivative_mode,
        name=doc.name,
        reference_tolerance=doc.reference_tolerance,
    )
    try:
        validate_definition(model)
    except NcmFeError as exc:
        raise WeightFileError(doc.architecture, str(exc)) from None
    return model


def load_weight_file(path: str) -> NcmDefinition:
    """Load and validate a weight file; logs τ(I) since it is not corrected."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise WeightFileError("", f"weight file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise WeightFileError("", f"{path}: invalid JSON ({exc})") from None
    model = parse_weight_document(data)
    if not model.name:
        model = replace(model, name=os.path.splitext(os.path.basename(path))[0])
    _, tau0 = reference_state(model)
    logger.info("Loaded %s model %r; |tau(I)|max = %.3e", model.architecture, model.name,
                float(np.max(np.abs(tau0))))
    return model


def bundled_weight_files() -> dict[str, str]:
    """Bundled example weight files keyed by name (file stem)."""
    if not os.path.isdir(BUNDLED_WEIGHTS_DIR):
        return {}
    return {
        os.path.splitext(name)[0]: os.path.join(BUNDLED_WEIGHTS_DIR, name)
        for name in sorted(os.listdir(BUNDLED_WEIGHTS_DIR))
        if name.endswith(".json")
    }


def load_model(spec: str, derivative_mode: str | None = None) -> NcmDefinition:
    """Resolve ``gent-thomas``, a bundled name, or a weight-file path."""
    if spec == GENT_THOMAS_MODEL:
        model = gent_thomas_definition()
    else:
        bundled = bundled_weight_files()
        model = load_weight_file(bundled.get(spec, spec))
    if derivative_mode is not None and derivative_mode != model.derivative_mode:
        model = replace(model, derivative_mode=derivative_mode)  # type: ignore[arg-type]
    return model


def to_weight_document(model: NcmDefinition) -> dict:
    """Inverse of :func:`parse_weight_document`."""
    kin = model.kinematics
    base = {
        "format_version": 1,
        "name": model.name,
        "derivative_mode": model.derivative_mode,
        "kinematic": KinematicSpec(
            variant=kin.variant,
            invariants=list(kin.invariants),
            structural_vectors=np.asarray(kin.structural_vectors).reshape(-1, 3).tolist(),
            allow_cross_pairs=kin.allow_cross_pairs,
        ),
        "reference_tolerance": model.reference_tolerance,
    }
    w = model.weights
    doc: MicnnFile | CannFile | IckanFile
    if isinstance(w, MicnnWeights):
        layers = [
            MicnnLayerSpec(a=None if a is None else a.tolist(), b=b.tolist(), c=c.tolist())
            for a, b, c in zip(w.a, w.b, w.c, strict=True)
        ]
        doc = MicnnFile(architecture="micnn", monotone=w.monotone, layers=layers, **base)
    elif isinstance(w, CannWeights):
        branches = [CannBranchSpec(**br.__dict__) for br in w.branches]
        doc = CannFile(architecture="cann", branches=branches, **base)
    elif isinstance(w, IckanWeights):
        layers_k = [
            IckanLayerSpec(weights=layer.weights.tolist(), control=layer.control.tolist())
            for layer in w.layers
        ]
        doc = IckanFile(
            architecture="ickan",
            order=w.order,
            x_range=w.x_range,
            knots=None if w.knots is None else np.asarray(w.knots).tolist(),
            extrapolation=w.extrapolation,
            layers=layers_k,
            **base,
        )
    else:
        raise ModelDefinitionError(f"{model.architecture} has no weight-file form")
    return doc.model_dump(mode="json", exclude_none=True)


def save_weight_file(model: NcmDefinition, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_weight_document(model), f, indent=2)
        f.write("\n")


# ── Synthesis ────────────────────────────────────────────────────────────────


def _reference_value(name: str) -> float:
    kind, _, _ = parse_invariant(name)
    if kind in ("I1", "I2"):
        return 3.0
    return 1.0


def synthesize_weights(
    architecture: str,
    kinematics: KinematicConfig | None = None,
    rng: np.random.Generator | None = None,
    hidden: tuple[int, ...] = (8, 8),
    monotone: bool = True,
) -> NcmDefinition:
    """Random weights that satisfy every constraint of ``architecture``.

    Magnitudes keep outputs moderate for deformation gradients near identity.
    """
    rng = rng if rng is not None else np.random.default_rng()
    kinematics = kinematics or KinematicConfig(variant="isochoric", invariants=("I1", "I2"))
    m = kinematics.width
    names = kinematics.output_names

    weights: MicnnWeights | CannWeights | IckanWeights
    if architecture == "micnn":
        widths = [*hidden, 1]
        a_list: list[np.ndarray | None] = []
        b_list, c_list = [], []
        prev = 0
        for idx, width in enumerate(widths):
            b = rng.uniform(0.0, 0.5, (width, m))
            if not monotone:
                b = b - rng.uniform(0.0, 0.25, (width, m))
            a_list.append(None if idx == 0 else rng.uniform(0.0, 1.0, (width, prev)) / prev)
            b_list.append(b)
            c_list.append(rng.normal(0.0, 0.2, width) - (b @ np.array([_reference_value(n) for n in names])))
            prev = width
        weights = MicnnWeights(a=tuple(a_list), b=tuple(b_list), c=tuple(c_list), monotone=monotone)
    elif architecture == "cann":
        branches = []
        for i, name in enumerate(names):
            w0 = _reference_value(name)
            for f1 in ("power1", "power2"):
                branches.append(
                    CannBranch(
                        input=i,
                        f0="identity" if f1 == "power2" else "macaulay",
                        f1=f1,
                        f2=str(rng.choice(["linear", "exp"])),
                        w0=w0,
                        w1=float(rng.uniform(0.05, 0.5)),
                        w2=float(rng.uniform(0.1, 1.0)),
                    )
                )
        weights = CannWeights(n_inputs=m, branches=tuple(branches))
    elif architecture == "ickan":
        widths = [m, *(hidden[:1] or (2,)), 1]
        layers = []
        for n_in, n_out in zip(widths[:-1], widths[1:], strict=False):
            increments = rng.uniform(0.0, 0.1, (n_out, n_in, ICKAN_DEFAULT_BASIS - 1))
            slopes = np.cumsum(increments, axis=-1)
            start = rng.uniform(-0.1, 0.1, (n_out, n_in, 1))
            control = np.concatenate([start, start + np.cumsum(slopes, axis=-1)], axis=-1)
            layers.append(IckanLayer(weights=rng.uniform(0.1, 1.0, (n_out, n_in)), control=control))
        weights = IckanWeights(
            layers=tuple(layers), order=ICKAN_DEFAULT_ORDER, x_range=ICKAN_DEFAULT_RANGE
        )
    else:
        raise ModelDefinitionError(f"cannot synthesize weights for {architecture!r}")

    model = NcmDefinition(
        kinematics=kinematics, architecture=architecture, weights=weights, name=f"random-{architecture}"
    )
    validate_definition(model)
    return model

