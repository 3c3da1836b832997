"""
Pydantic models for every file ncm-fe reads or writes.

- Weight files (JSON): one document per model, discriminated on
  ``architecture``.  ``scripts/export_weight_schema.py`` dumps the JSON
  Schema for these.
- Run configs (``--config``), boundary-condition files and benchmark CSV
  rows.
"""

from __future__ import annotations

from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

# ── Weight files ─────────────────────────────────────────────────────────────


class KinematicSpec(BaseModel):
    """Kinematic layer: variant, active invariants and structural vectors."""

    model_config = ConfigDict(extra="forbid")

    variant: Literal["standard", "isochoric"] = "isochoric"
    invariants: list[str] = Field(default_factory=lambda: ["I1", "I2"], min_length=1)
    structural_vectors: list[Annotated[list[float], Field(min_length=3, max_length=3)]] = Field(
        default_factory=list
    )
    allow_cross_pairs: bool = False


def _check_non_negative(rows: list[list[float]] | list[float] | None) -> None:
    if rows is None:
        return
    flat = [v for row in rows for v in row] if rows and isinstance(rows[0], list) else rows
    bad = [v for v in flat if v < 0.0]  # type: ignore[operator, union-attr]
    if bad:
        raise ValueError(f"entries must be >= 0, found {bad[0]}")


class _WeightFileBase(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: Literal[1] = 1
    name: str = ""
    description: str = ""
    derivative_mode: Literal["cgo", "fd"] = "cgo"
    kinematic: KinematicSpec = Field(default_factory=KinematicSpec)
    reference_tolerance: float | None = Field(default=None, gt=0)


class MicnnLayerSpec(BaseModel):
    """``y = a z + b K + c``; ``a`` is omitted on the first layer."""

    model_config = ConfigDict(extra="forbid")

    a: list[list[float]] | None = None
    b: list[list[float]] = Field(min_length=1)
    c: list[float] = Field(min_length=1)

    @field_validator("a")
    @classmethod
    def _a_non_negative(cls, v: list[list[float]] | None) -> list[list[float]] | None:
        _check_non_negative(v)
        return v


class MicnnFile(_WeightFileBase):
    architecture: Literal["micnn"]
    monotone: bool = True
    layers: list[MicnnLayerSpec] = Field(min_length=1)


class CannBranchSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    input: int = Field(ge=0)
    f0: Literal["identity", "macaulay", "abs"] = "identity"
    f1: Literal["power1", "power2", "power3"] = "power1"
    f2: Literal["linear", "exp", "log"] = "linear"
    w0: float = 0.0
    w1: float = Field(default=1.0, ge=0)
    w2: float = Field(default=1.0, ge=0)


class CannFile(_WeightFileBase):
    architecture: Literal["cann"]
    branches: list[CannBranchSpec] = Field(min_length=1)


class IckanLayerSpec(BaseModel):
    """Edge splines: ``weights[out][in]`` and ``control[out][in][basis]``."""

    model_config = ConfigDict(extra="forbid")

    weights: list[list[float]] = Field(min_length=1)
    control: list[list[list[float]]] = Field(min_length=1)

    @field_validator("weights")
    @classmethod
    def _weights_non_negative(cls, v: list[list[float]]) -> list[list[float]]:
        _check_non_negative(v)
        return v


class IckanFile(_WeightFileBase):
    architecture: Literal["ickan"]
    order: int = Field(default=3, ge=1)
    x_range: tuple[float, float] = (-1.0, 4.0)
    knots: list[float] | None = None
    extrapolation: Literal["linear", "clamp"] = "linear"
    layers: list[IckanLayerSpec] = Field(min_length=1)


WeightFile = Annotated[MicnnFile | CannFile | IckanFile, Field(discriminator="architecture")]


# ── Boundary-condition files ─────────────────────────────────────────────────


class FixedBc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    node_set: str
    components: list[Annotated[int, Field(ge=0, le=2)]] = Field(default_factory=lambda: [0, 1, 2])
    value: list[float] | None = None


class TwistBc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    node_set: str
    axis: Annotated[int, Field(ge=0, le=2)] = 2
    center: tuple[float, float] = (0.5, 0.5)
    angle: float = 0.0
    axial: float = 0.0


class TractionBc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    facet_set: str
    traction: tuple[float, float, float]


class BcFile(BaseModel):
    """Dirichlet and Neumann data for ``ncm-fe solve``."""

    model_config = ConfigDict(extra="forbid")

    fixed: list[FixedBc] = Field(default_factory=list)
    twist: list[TwistBc] = Field(default_factory=list)
    traction: list[TractionBc] = Field(default_factory=list)


# ── Run configuration ────────────────────────────────────────────────────────


class RunConfig(BaseModel):
    """Keys accepted by ``--config``; every key mirrors a CLI flag."""

    model_config = ConfigDict(extra="forbid")

    model: str | None = None
    out: str | None = None
    seed: int | None = Field(default=None, ge=0)
    batch_sizes: list[Annotated[int, Field(ge=1)]] | None = None
    workers: list[Annotated[int, Field(ge=1)]] | None = None
    mode: list[Literal["cgo", "fd"]] | None = None
    assembly: list[Literal["trad", "global", "batch", "partitioned"]] | None = None
    mesh_sizes: list[Annotated[int, Field(ge=1)]] | None = None
    n_points: list[Annotated[int, Field(ge=1)]] | None = None
    repetitions: int | None = Field(default=None, ge=1)
    load_steps: int | None = Field(default=None, ge=1)
    steps: int | None = Field(default=None, ge=1)
    gamma_max: float | None = None
    mesh: str | None = None
    bc: str | None = None
    quick: bool | None = None


# ── Benchmark output ─────────────────────────────────────────────────────────


class BenchRecord(BaseModel):
    """One benchmark CSV row; ``kind`` is ``raw`` for each repetition or ``median``."""

    experiment: str
    kind: Literal["raw", "median"] = "raw"
    architecture: str
    mode: str
    assembly: str = ""
    n_points: int = 0
    n_dofs: int = 0
    mesh_n: int = 0
    batch_size: int = 0
    workers: int = 1
    repetition: int = 0
    constitutive_ns: int = 0
    assembly_ns: int = 0
    solve_ns: int = 0
    total_ns: int = 0
    peak_bytes: int = 0
    newton_iterations: int = 0
    cg_iterations: int = 0
    max_trace_c: float = 0.0
    converged: bool = True
    digest: str = ""
    speedup_vs_batch1: float | None = None
    speedup_vs_fd: float | None = None
    speedup_vs_single_worker: float | None = None
    error: str = ""
    version: str = ""
    config: str = ""


class PathScanRecord(BaseModel):
    path: str
    gamma: float
    psi_model: float
    psi_reference: float
    error: str = ""


class VerifyCheck(BaseModel):
    """Outcome of one property in the ``verify`` report."""

    name: str
    passed: bool
    max_error: float = 0.0
    tolerance: float = 0.0
    detail: str = ""


class VerifyReport(BaseModel):
    version: str
    passed: bool
    checks: list[VerifyCheck]
