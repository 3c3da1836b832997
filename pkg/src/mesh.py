"""
Hex8 meshes, quadrature cache, DOF maps and boundary data.

Mesh file grammar (plain text, ``#`` starts a comment, indices 0-based)::

    nodes <N>
    <x> <y> <z>                     # N lines
    elements <E>
    <n0> ... <n7>                   # E lines, node order as HEX8_CORNERS
    nodeset <name> <K>
    <i> <i> ...                     # K indices, any line breaks
    facetset <name> <K>
    <a> <b> <c> <d>                 # K quads, nodes in cyclic order

Boundary conditions for ``solve`` come from a JSON file validated by
:class:`src.schemas.BcFile`.
"""

from __future__ import annotations

import json
import logging
import os

import numpy as np
from pydantic import ValidationError

from .constants import (
    GAUSS_POINT,
    HEX8_CORNERS,
    NODES_PER_ELEMENT,
    TWIST_ANGLE,
    TWIST_AXIAL_DISPLACEMENT,
)
from .errors import MeshError
from .models import (
    DofMap,
    FeModel,
    FixedSpec,
    FloatArray,
    IntArray,
    Mesh,
    QuadCache,
    TractionSpec,
    TwistSpec,
)
from .schemas import BcFile

logger = logging.getLogger(__name__)

_GAUSS_POINTS = HEX8_CORNERS * GAUSS_POINT
_FACE_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_PLANE_AXES = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


# ── Structured cube ──────────────────────────────────────────────────────────


def _node_id(n: int, i: IntArray, j: IntArray, k: IntArray) -> IntArray:
    return i + (n + 1) * (j + (n + 1) * k)


def build_structured_cube(n: int) -> Mesh:
    """Unit cube ``[0, 1]³`` split into ``n³`` hex8 elements.

    Node ``(i, j, k)`` has index ``i + (n+1)(j + (n+1) k)``.  Node sets and
    facet sets ``x0, x1, y0, y1, z0, z1`` name the six faces.
    """
    if n < 1:
        raise MeshError(f"cube subdivisions must be >= 1, got {n}")
    ticks = np.arange(n + 1)
    k, j, i = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    nodes = np.column_stack([i, j, k]).astype(float) / n

    ek, ej, ei = (g.ravel() for g in np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"))
    offsets = ((HEX8_CORNERS + 1.0) / 2.0).astype(np.intp)
    elements = np.column_stack(
        [_node_id(n, ei + di, ej + dj, ek + dk) for di, dj, dk in offsets]
    ).astype(np.intp)

    node_sets = {}
    facet_sets = {}
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a, b = a.ravel(), b.ravel()
    for axis, label in enumerate("xyz"):
        coord = (i, j, k)[axis]
        for side, value in (("0", 0), ("1", n)):
            name = f"{label}{side}"
            node_sets[name] = np.flatnonzero(coord == value).astype(np.intp)
            p, q = _PLANE_AXES[axis]
            quads = []
            for dp, dq in ((0, 0), (1, 0), (1, 1), (0, 1)):
                idx = [np.zeros_like(a), np.zeros_like(a), np.zeros_like(a)]
                idx[axis] = np.full_like(a, value)
                idx[p] = a + dp
                idx[q] = b + dq
                quads.append(_node_id(n, *idx))
            facet_sets[name] = np.column_stack(quads).astype(np.intp)
    return Mesh(nodes=nodes, elements=elements, node_sets=node_sets, facet_sets=facet_sets)


# ── Shape functions and quadrature ───────────────────────────────────────────


def shape_gradients_reference(xi: FloatArray) -> FloatArray:
    """``∂N_I/∂ξ_a`` of the trilinear hex at points ``(..., 3)`` -> ``(..., 8, 3)``."""
    factors = 1.0 + xi[..., None, :] * HEX8_CORNERS  # (..., 8, 3)
    out = np.empty(factors.shape)
    for a in range(3):
        others = [b for b in range(3) if b != a]
        out[..., a] = (
            0.125 * HEX8_CORNERS[:, a] * factors[..., others[0]] * factors[..., others[1]]
        )
    return out


def shape_values(xi: FloatArray) -> FloatArray:
    factors = 1.0 + xi[..., None, :] * HEX8_CORNERS
    return 0.125 * factors[..., 0] * factors[..., 1] * factors[..., 2]


def build_quad_cache(mesh: Mesh) -> QuadCache:
    """Reference shape gradients and weights at the 2x2x2 Gauss points of every element."""
    dn_dxi = shape_gradients_reference(_GAUSS_POINTS)  # (8q, 8I, 3a)
    coords = mesh.nodes[mesh.elements]  # (e, 8I, 3A)
    jac = np.einsum("eIA,qIa->eqAa", coords, dn_dxi)
    det = np.linalg.det(jac)
    if np.any(det <= 0.0):
        e, q = np.argwhere(det <= 0.0)[0]
        raise MeshError(f"element {e}: non-positive Jacobian {det[e, q]:.3e} at quadrature point {q}")
    jac_inv = np.linalg.inv(jac)
    grad = np.einsum("qIa,eqaA->eqIA", dn_dxi, jac_inv)
    return QuadCache(grad=np.ascontiguousarray(grad), weights=det)


# ── DOF map and boundary data ────────────────────────────────────────────────


def _node_set(mesh: Mesh, name: str) -> IntArray:
    if name not in mesh.node_sets:
        raise MeshError(f"unknown node set {name!r}; available: {sorted(mesh.node_sets)}")
    return mesh.node_sets[name]


def build_dofmap(
    mesh: Mesh,
    fixed: tuple[FixedSpec, ...] = (),
    twists: tuple[TwistSpec, ...] = (),
    tractions: tuple[TractionSpec, ...] = (),
) -> DofMap:
    """Number DOFs ``3 * node + direction`` and split them into constrained and free."""
    owner = np.full(mesh.n_dofs, -1, dtype=np.intp)
    for idx, spec in enumerate((*fixed, *twists)):
        nodes = _node_set(mesh, spec.node_set)
        comps = spec.components if isinstance(spec, FixedSpec) else (0, 1, 2)
        dofs = (3 * nodes[:, None] + np.asarray(comps)[None, :]).ravel()
        clash = dofs[(owner[dofs] >= 0) & (owner[dofs] != idx)]
        if clash.size:
            raise MeshError(f"DOF {clash[0]} is constrained by two boundary conditions")
        owner[dofs] = idx
    for spec in tractions:
        if spec.facet_set not in mesh.facet_sets:
            raise MeshError(f"unknown facet set {spec.facet_set!r}")
    constrained = np.flatnonzero(owner >= 0).astype(np.intp)
    free = np.flatnonzero(owner < 0).astype(np.intp)
    return DofMap(
        n_dofs=mesh.n_dofs,
        constrained=constrained,
        free=free,
        fixed=tuple(fixed),
        twists=tuple(twists),
        tractions=tuple(tractions),
    )


def prescribed_displacement(mesh: Mesh, dofmap: DofMap, load_factor: float) -> FloatArray:
    """Full-length vector holding the Dirichlet values at ``load_factor`` (zero on free DOFs)."""
    u = np.zeros(dofmap.n_dofs)
    for spec in dofmap.fixed:
        nodes = _node_set(mesh, spec.node_set)
        for comp, value in zip(spec.components, spec.value, strict=False):
            u[3 * nodes + comp] = value * load_factor
    for spec in dofmap.twists:
        nodes = _node_set(mesh, spec.node_set)
        p, q = _PLANE_AXES[spec.axis]
        theta = spec.angle * load_factor
        cos, sin = np.cos(theta), np.sin(theta)
        xp = mesh.nodes[nodes, p] - spec.center[0]
        xq = mesh.nodes[nodes, q] - spec.center[1]
        u[3 * nodes + p] = cos * xp - sin * xq - xp
        u[3 * nodes + q] = sin * xp + cos * xq - xq
        u[3 * nodes + spec.axis] = spec.axial * load_factor
    return u


def traction_load(mesh: Mesh, dofmap: DofMap, load_factor: float) -> FloatArray:
    """Consistent nodal forces of the dead reference tractions (2x2 Gauss per quad)."""
    f = np.zeros(dofmap.n_dofs)
    if not dofmap.tractions:
        return f
    gp = _FACE_CORNERS * GAUSS_POINT
    n_val = 0.25 * (1.0 + gp[:, None, 0] * _FACE_CORNERS[:, 0]) * (1.0 + gp[:, None, 1] * _FACE_CORNERS[:, 1])
    dn_dxi = 0.25 * _FACE_CORNERS[:, 0] * (1.0 + gp[:, None, 1] * _FACE_CORNERS[:, 1])
    dn_deta = 0.25 * _FACE_CORNERS[:, 1] * (1.0 + gp[:, None, 0] * _FACE_CORNERS[:, 0])
    for spec in dofmap.tractions:
        quads = mesh.facet_sets[spec.facet_set]
        coords = mesh.nodes[quads]  # (f, 4, 3)
        t_xi = np.einsum("ga,fai->fgi", dn_dxi, coords)
        t_eta = np.einsum("ga,fai->fgi", dn_deta, coords)
        area = np.linalg.norm(np.cross(t_xi, t_eta), axis=-1)  # (f, g)
        nodal = np.einsum("ga,fg->fa", n_val, area)  # (f, 4)
        traction = np.asarray(spec.traction) * load_factor
        for comp in range(3):
            np.add.at(f, 3 * quads.ravel() + comp, (nodal * traction[comp]).ravel())
    return f


def twist_cube_model(
    n: int, angle: float = TWIST_ANGLE, axial: float = TWIST_AXIAL_DISPLACEMENT
) -> FeModel:
    """Unit cube fixed on ``z0``; ``z1`` twisted by ``angle`` about the centre axis and lifted by ``axial``."""
    mesh = build_structured_cube(n)
    dofmap = build_dofmap(
        mesh,
        fixed=(FixedSpec(node_set="z0"),),
        twists=(TwistSpec(node_set="z1", axis=2, center=(0.5, 0.5), angle=angle, axial=axial),),
    )
    return FeModel(mesh=mesh, cache=build_quad_cache(mesh), dofmap=dofmap)


# ── Mesh files ───────────────────────────────────────────────────────────────


def _tokens(path: str) -> list[tuple[int, list[str]]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            words = line.split("#", 1)[0].split()
            if words:
                out.append((lineno, words))
    return out


def read_mesh(path: str) -> Mesh:
    """Parse a mesh file; see the module docstring for the grammar."""
    if not os.path.isfile(path):
        raise MeshError(f"mesh file not found: {path}")
    lines = _tokens(path)
    pos = 0
    nodes = elements = None
    node_sets: dict[str, IntArray] = {}
    facet_sets: dict[str, IntArray] = {}

    def take_rows(count: int, width: int, lineno: int, what: str) -> list[list[str]]:
        nonlocal pos
        rows = [words for _, words in lines[pos : pos + count]]
        if len(rows) < count or any(len(r) != width for r in rows):
            raise MeshError(f"line {lineno}: {what} expects {count} rows of {width} values")
        pos += count
        return rows

    try:
        while pos < len(lines):
            lineno, words = lines[pos]
            pos += 1
            keyword = words[0]
            if keyword == "nodes" and len(words) == 2:
                nodes = np.array(take_rows(int(words[1]), 3, lineno, "nodes"), dtype=float)
            elif keyword == "elements" and len(words) == 2:
                elements = np.array(take_rows(int(words[1]), NODES_PER_ELEMENT, lineno, "elements"), dtype=np.intp)
            elif keyword == "nodeset" and len(words) == 3:
                count = int(words[2])
                values: list[str] = []
                while len(values) < count and pos < len(lines):
                    values.extend(lines[pos][1])
                    pos += 1
                if len(values) != count:
                    raise MeshError(f"line {lineno}: nodeset {words[1]} expects {count} indices")
                node_sets[words[1]] = np.array(values, dtype=np.intp)
            elif keyword == "facetset" and len(words) == 3:
                facet_sets[words[1]] = np.array(take_rows(int(words[2]), 4, lineno, "facetset"), dtype=np.intp).reshape(-1, 4)
            else:
                raise MeshError(f"line {lineno}: unexpected {' '.join(words)!r}")
    except ValueError as exc:
        raise MeshError(f"{path}: {exc}") from None

    if nodes is None or elements is None:
        raise MeshError(f"{path}: both 'nodes' and 'elements' blocks are required")
    mesh = Mesh(nodes=nodes.reshape(-1, 3), elements=elements.reshape(-1, 8), node_sets=node_sets, facet_sets=facet_sets)
    _check_indices(mesh)
    return mesh


def _check_indices(mesh: Mesh) -> None:
    limit = mesh.n_nodes
    groups = {"elements": mesh.elements, **mesh.node_sets, **mesh.facet_sets}
    for name, idx in groups.items():
        if idx.size and (idx.min() < 0 or idx.max() >= limit):
            raise MeshError(f"{name}: node index out of range 0..{limit - 1}")


def write_mesh(mesh: Mesh, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# hex8 mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements\n")
        f.write(f"nodes {mesh.n_nodes}\n")
        for x, y, z in mesh.nodes:
            f.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
        f.write(f"elements {mesh.n_elements}\n")
        for row in mesh.elements:
            f.write(" ".join(str(int(v)) for v in row) + "\n")
        for name, idx in mesh.node_sets.items():
            f.write(f"nodeset {name} {idx.size}\n")
            f.write(" ".join(str(int(v)) for v in idx) + "\n")
        for name, quads in mesh.facet_sets.items():
            f.write(f"facetset {name} {quads.shape[0]}\n")
            for row in quads:
                f.write(" ".join(str(int(v)) for v in row) + "\n")


# ── Boundary-condition files ─────────────────────────────────────────────────


def load_bc_file(path: str, mesh: Mesh) -> DofMap:
    """Read a JSON boundary-condition file and build the DOF map for ``mesh``."""
    try:
        with open(path, encoding="utf-8") as f:
            bc = BcFile.model_validate(json.load(f))
    except FileNotFoundError:
        raise MeshError(f"boundary-condition file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: invalid JSON ({exc})") from None
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"])
        raise MeshError(f"{path}: {loc}: {err['msg']}") from None

    fixed = tuple(
        FixedSpec(
            node_set=spec.node_set,
            components=tuple(spec.components),
            value=tuple(spec.value) if spec.value is not None else (0.0,) * len(spec.components),
        )
        for spec in bc.fixed
    )
    for spec in fixed:
        if len(spec.value) != len(spec.components):
            raise MeshError(f"{path}: fixed {spec.node_set}: one value per component required")
    twists = tuple(
        TwistSpec(node_set=s.node_set, axis=s.axis, center=s.center, angle=s.angle, axial=s.axial)
        for s in bc.twist
    )
    tractions = tuple(TractionSpec(facet_set=s.facet_set, traction=s.traction) for s in bc.traction)
    return build_dofmap(mesh, fixed, twists, tractions)
