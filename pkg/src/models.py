"""Typed runtime data models for ncm-fe.

Configs are frozen dataclasses; tables (:class:`MaterialBatch`, the FE
caches) own preallocated numpy blocks that kernels write into in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .constants import (
    CG_MAX_ITERATIONS,
    CG_REL_TOL,
    ICKAN_DEFAULT_ORDER,
    ICKAN_DEFAULT_RANGE,
    NEWTON_ABS_TOL,
    NEWTON_LOAD_STEPS,
    NEWTON_MAX_HALVINGS,
    NEWTON_MAX_ITERATIONS,
    NEWTON_REL_TOL,
)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.intp]

KinematicVariant = Literal["standard", "isochoric"]
DerivativeMode = Literal["cgo", "fd"]
Extrapolation = Literal["linear", "clamp"]


# ── Kinematics ───────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class KinematicConfig:
    """Which invariants the kinematic layer produces, in output order.

    Invariant names: ``I1``, ``I2``, ``I3``, ``J`` and ``I4_i_j`` / ``I5_i_j``
    with 0-based structural-vector indices.  The isochoric variant accepts
    I1, I2, I4 and I5 only and always appends ``J`` last.
    """

    variant: KinematicVariant = "standard"
    invariants: tuple[str, ...] = ("I1", "I2", "I3")
    structural_vectors: FloatArray = field(default_factory=lambda: np.zeros((0, 3)))
    allow_cross_pairs: bool = False

    @property
    def output_names(self) -> tuple[str, ...]:
        if self.variant == "isochoric":
            return (*self.invariants, "J")
        return self.invariants

    @property
    def width(self) -> int:
        return len(self.output_names)


@dataclass
class KinematicEval:
    """Invariant values with their first/second derivative tensors.

    ``values`` is ``(..., m)``, ``g`` is ``(..., m, 6)`` and ``gg`` is
    ``(..., m, 6, 6)``, ordered like :attr:`KinematicConfig.output_names`.
    """

    values: FloatArray
    g: FloatArray
    gg: FloatArray


# ── Inner networks ───────────────────────────────────────────────────────────


@dataclass
class InnerEval:
    """Inner-network value, gradient and Hessian over leading batch axes."""

    value: FloatArray
    grad: FloatArray
    hess: FloatArray
    layer_visits: int = 0


@dataclass(frozen=True)
class MicnnWeights:
    """Monotone input-convex network: ``z_k = softplus(A_k z_{k-1} + B_k K + c_k)``.

    ``a[0]`` is ``None`` (the first layer sees only K); every later ``a[k]``
    is non-negative.  The last layer has one output and no activation; its
    ``a`` may also be ``None`` when there are no hidden layers.
    """

    a: tuple[FloatArray | None, ...]
    b: tuple[FloatArray, ...]
    c: tuple[FloatArray, ...]
    monotone: bool = True

    @property
    def n_inputs(self) -> int:
        return int(self.b[0].shape[1])

    @property
    def n_layers(self) -> int:
        return len(self.b)


@dataclass(frozen=True)
class CannBranch:
    """One tree branch ``w2 * f2(f1(f0(K[input] - w0)); w1)``."""

    input: int
    f0: str = "identity"
    f1: str = "power1"
    f2: str = "linear"
    w0: float = 0.0
    w1: float = 1.0
    w2: float = 1.0


@dataclass(frozen=True)
class CannWeights:
    n_inputs: int
    branches: tuple[CannBranch, ...]


@dataclass(frozen=True)
class IckanLayer:
    """Edge splines of one layer: ``weights`` ``(n_out, n_in)``, ``control`` ``(n_out, n_in, n_b)``."""

    weights: FloatArray
    control: FloatArray

    @property
    def n_in(self) -> int:
        return int(self.weights.shape[1])

    @property
    def n_out(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class IckanWeights:
    layers: tuple[IckanLayer, ...]
    order: int = ICKAN_DEFAULT_ORDER
    x_range: tuple[float, float] = ICKAN_DEFAULT_RANGE
    knots: FloatArray | None = None
    extrapolation: Extrapolation = "linear"

    @property
    def n_inputs(self) -> int:
        return self.layers[0].n_in

    @property
    def n_basis(self) -> int:
        return int(self.layers[0].control.shape[-1])


InnerWeights = MicnnWeights | CannWeights | IckanWeights | None


# ── Constitutive models ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class NcmDefinition:
    """Kinematic layer plus inner network; ``architecture`` may be ``gent-thomas``."""

    kinematics: KinematicConfig
    architecture: str
    weights: InnerWeights
    derivative_mode: DerivativeMode = "cgo"
    name: str = ""
    reference_tolerance: float | None = None


class MaterialBatch:
    """Structure-of-arrays table for a contiguous run of material points.

    Blocks are allocated once at ``capacity`` and reused; only ``n`` rows
    are live.  Kernels read ``f[:n]`` and write ``psi``/``tau``/``stiffness``
    in place.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"batch capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.n = 0
        self.f = np.zeros((capacity, 3, 3))
        self.psi = np.zeros(capacity)
        self.tau = np.zeros((capacity, 6))
        self.stiffness = np.zeros((capacity, 6, 6))

    def load(self, f: FloatArray) -> None:
        """Copy ``(k, 3, 3)`` deformation gradients into the first ``k`` rows."""
        k = f.shape[0]
        if k > self.capacity:
            raise ValueError(f"{k} points exceed batch capacity {self.capacity}")
        self.f[:k] = f
        self.n = k

    @property
    def nbytes(self) -> int:
        return self.f.nbytes + self.psi.nbytes + self.tau.nbytes + self.stiffness.nbytes


# ── Finite elements ──────────────────────────────────────────────────────────


@dataclass
class Mesh:
    """Hex8 mesh: ``nodes`` ``(n_nodes, 3)``, ``elements`` ``(n_el, 8)``."""

    nodes: FloatArray
    elements: IntArray
    node_sets: dict[str, IntArray] = field(default_factory=dict)
    facet_sets: dict[str, IntArray] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes


@dataclass
class QuadCache:
    """Reference shape gradients ``(n_el, 8, 8, 3)`` [element, qp, node, dim]
    and quadrature weights ``(n_el, 8)`` including the Jacobian determinant."""

    grad: FloatArray
    weights: FloatArray


@dataclass(frozen=True)
class FixedSpec:
    """Prescribe ``value * load_factor`` on ``components`` of every node in ``node_set``."""

    node_set: str
    components: tuple[int, ...] = (0, 1, 2)
    value: tuple[float, ...] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TwistSpec:
    """Rotate ``node_set`` by ``angle * λ`` about ``axis`` through ``center``
    and displace it by ``axial * λ`` along the axis."""

    node_set: str
    axis: int = 2
    center: tuple[float, float] = (0.5, 0.5)
    angle: float = 0.0
    axial: float = 0.0


@dataclass(frozen=True)
class TractionSpec:
    """Dead reference traction ``traction * λ`` on every facet of ``facet_set``."""

    facet_set: str
    traction: tuple[float, float, float]


@dataclass
class DofMap:
    """Global DOF numbering (``3 * node + direction``) and boundary data.

    ``constrained`` and ``free`` are sorted and disjoint.  Prescribed values
    are evaluated per load factor by :func:`src.mesh.prescribed_displacement`.
    """

    n_dofs: int
    constrained: IntArray
    free: IntArray
    fixed: tuple[FixedSpec, ...] = ()
    twists: tuple[TwistSpec, ...] = ()
    tractions: tuple[TractionSpec, ...] = ()


@dataclass
class FeModel:
    mesh: Mesh
    cache: QuadCache
    dofmap: DofMap


# ── Solver ───────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = NEWTON_ABS_TOL
    rel_tol: float = NEWTON_REL_TOL
    max_iterations: int = NEWTON_MAX_ITERATIONS
    load_steps: int = NEWTON_LOAD_STEPS
    max_halvings: int = NEWTON_MAX_HALVINGS

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("Newton tolerances must be > 0")
        if self.load_steps < 1 or self.max_iterations < 1 or self.max_halvings < 0:
            raise ValueError("load_steps and max_iterations must be >= 1, max_halvings >= 0")


@dataclass(frozen=True)
class CgConfig:
    rel_tol: float = CG_REL_TOL
    max_iterations: int = CG_MAX_ITERATIONS

    def __post_init__(self) -> None:
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"CG tolerance must lie in (0, 1), got {self.rel_tol}")
        if self.max_iterations < 1:
            raise ValueError("CG max_iterations must be >= 1")


@dataclass
class CgResult:
    x: FloatArray
    iterations: int
    converged: bool
    residual_norm: float


@dataclass
class AssemblyTimings:
    """Nanoseconds spent in one assembly call, split by phase."""

    constitutive_ns: int = 0
    other_ns: int = 0
    max_trace_c: float = 0.0

    def add(self, other: AssemblyTimings) -> None:
        self.constitutive_ns += other.constitutive_ns
        self.other_ns += other.other_ns
        self.max_trace_c = max(self.max_trace_c, other.max_trace_c)


@dataclass
class SolveReport:
    """Outcome of :func:`src.solver.newton_solve`."""

    converged: bool = False
    load_steps: int = 0
    halvings: int = 0
    newton_iterations: int = 0
    cg_iterations: int = 0
    constitutive_ns: int = 0
    assembly_other_ns: int = 0
    linear_solve_ns: int = 0
    total_ns: int = 0
    max_trace_c: float = 0.0
    final_load_factor: float = 0.0
    residual_histories: list[list[float]] = field(default_factory=list)
    message: str = ""
