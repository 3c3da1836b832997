"""Tests for mesh.py: structured cube, quadrature, DOF maps, boundary data and mesh files."""

import json

import numpy as np
import pytest

from src.errors import MeshError
from src.mesh import (
    build_dofmap,
    build_quad_cache,
    build_structured_cube,
    load_bc_file,
    prescribed_displacement,
    read_mesh,
    shape_gradients_reference,
    shape_values,
    traction_load,
    twist_cube_model,
    write_mesh,
)
from src.models import FixedSpec, Mesh, TractionSpec


class TestStructuredCube:
    def test_counts(self):
        mesh = build_structured_cube(2)
        assert mesh.n_nodes == 27
        assert mesh.n_elements == 8
        assert mesh.n_dofs == 81

    def test_face_sets(self):
        mesh = build_structured_cube(3)
        for name in ("x0", "x1", "y0", "y1", "z0", "z1"):
            assert mesh.node_sets[name].size == 16
            assert mesh.facet_sets[name].shape == (9, 4)
        np.testing.assert_array_equal(mesh.nodes[mesh.node_sets["z1"], 2], 1.0)
        np.testing.assert_array_equal(mesh.nodes[mesh.node_sets["x0"], 0], 0.0)

    def test_node_numbering(self):
        mesh = build_structured_cube(2)
        np.testing.assert_array_equal(mesh.nodes[1 + 3 * (2 + 3 * 1)], [0.5, 1.0, 0.5])

    def test_rejects_zero_subdivisions(self):
        with pytest.raises(MeshError):
            build_structured_cube(0)


class TestShapeFunctions:
    def test_partition_of_unity(self, rng):
        xi = rng.uniform(-1.0, 1.0, (10, 3))
        np.testing.assert_allclose(shape_values(xi).sum(axis=-1), 1.0, atol=1e-15)
        np.testing.assert_allclose(shape_gradients_reference(xi).sum(axis=-2), 0.0, atol=1e-15)

    def test_gradients_match_finite_differences(self, rng):
        xi = rng.uniform(-1.0, 1.0, 3)
        h = 1e-6
        grad = shape_gradients_reference(xi)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fd = (shape_values(xi + e) - shape_values(xi - e)) / (2.0 * h)
            np.testing.assert_allclose(grad[:, a], fd, atol=1e-9)


class TestQuadCache:
    def test_weights_sum_to_volume(self):
        cache = build_quad_cache(build_structured_cube(3))
        assert cache.weights.shape == (27, 8)
        assert cache.weights.sum() == pytest.approx(1.0, rel=1e-13)

    def test_gradients_reproduce_linear_field(self):
        mesh = build_structured_cube(2)
        mesh.nodes = mesh.nodes * np.array([2.0, 1.0, 0.5])
        cache = build_quad_cache(mesh)
        coords = mesh.nodes[mesh.elements]
        ident = np.einsum("eIA,eqIB->eqAB", coords, cache.grad)
        np.testing.assert_allclose(ident, np.broadcast_to(np.eye(3), ident.shape), atol=1e-13)

    def test_inverted_element_is_rejected(self):
        mesh = build_structured_cube(1)
        mesh.nodes[:, 0] = -mesh.nodes[:, 0]
        with pytest.raises(MeshError, match="non-positive Jacobian"):
            build_quad_cache(mesh)


class TestDofMap:
    def test_twist_cube_split(self, cube2):
        dm = cube2.dofmap
        assert dm.constrained.size == 54
        assert dm.free.size == 27
        assert np.intersect1d(dm.constrained, dm.free).size == 0
        np.testing.assert_array_equal(np.sort(np.concatenate([dm.constrained, dm.free])), np.arange(81))

    def test_overlapping_conditions_clash(self):
        mesh = build_structured_cube(2)
        with pytest.raises(MeshError, match="two boundary conditions"):
            build_dofmap(mesh, fixed=(FixedSpec("x0"), FixedSpec("z0")))

    def test_disjoint_components_do_not_clash(self):
        mesh = build_structured_cube(2)
        dm = build_dofmap(mesh, fixed=(FixedSpec("x0", components=(0,), value=(0.0,)),
                                       FixedSpec("z0", components=(2,), value=(0.0,))))
        assert dm.constrained.size == 18

    def test_unknown_sets(self):
        mesh = build_structured_cube(1)
        with pytest.raises(MeshError, match="unknown node set"):
            build_dofmap(mesh, fixed=(FixedSpec("top"),))
        with pytest.raises(MeshError, match="unknown facet set"):
            build_dofmap(mesh, tractions=(TractionSpec("top", (0.0, 0.0, 1.0)),))


class TestPrescribedDisplacement:
    def test_half_turn_and_lift(self, cube2):
        u = prescribed_displacement(cube2.mesh, cube2.dofmap, 1.0)
        corner = 0 + 3 * (0 + 3 * 2)  # node (0, 0, 1)
        np.testing.assert_allclose(u[3 * corner : 3 * corner + 3], [1.0, 1.0, 1.0], atol=1e-14)
        assert np.all(u[3 * cube2.mesh.node_sets["z0"]] == 0.0)

    def test_scales_with_load_factor(self):
        fe = twist_cube_model(2, angle=0.0, axial=0.4)
        u = prescribed_displacement(fe.mesh, fe.dofmap, 0.5)
        top = fe.mesh.node_sets["z1"]
        np.testing.assert_allclose(u[3 * top + 2], 0.2)
        np.testing.assert_allclose(u[3 * top], 0.0, atol=1e-15)

    def test_zero_at_zero_load(self, cube2):
        assert not np.any(prescribed_displacement(cube2.mesh, cube2.dofmap, 0.0))

    def test_free_dofs_stay_zero(self, cube2):
        u = prescribed_displacement(cube2.mesh, cube2.dofmap, 0.7)
        assert not np.any(u[cube2.dofmap.free])


class TestTractionLoad:
    def test_total_force_equals_traction_times_area(self):
        mesh = build_structured_cube(3)
        dm = build_dofmap(mesh, fixed=(FixedSpec("z0"),), tractions=(TractionSpec("z1", (0.0, 0.5, 2.0)),))
        f = traction_load(mesh, dm, 0.5)
        assert f[1::3].sum() == pytest.approx(0.25)
        assert f[2::3].sum() == pytest.approx(1.0)
        assert f[0::3].sum() == pytest.approx(0.0, abs=1e-15)

    def test_no_tractions_gives_zero(self, cube2):
        assert not np.any(traction_load(cube2.mesh, cube2.dofmap, 1.0))


class TestMeshFiles:
    def test_write_then_read(self, tmp_path):
        mesh = build_structured_cube(2)
        path = str(tmp_path / "cube.mesh")
        write_mesh(mesh, path)
        back = read_mesh(path)
        np.testing.assert_array_equal(back.nodes, mesh.nodes)
        np.testing.assert_array_equal(back.elements, mesh.elements)
        assert set(back.node_sets) == set(mesh.node_sets)
        np.testing.assert_array_equal(back.facet_sets["z1"], mesh.facet_sets["z1"])

    def test_comments_and_wrapped_node_sets(self, tmp_path):
        path = tmp_path / "one.mesh"
        lines = ["# single element", "nodes 8"]
        lines += [f"{x} {y} {z}" for z in (0, 1) for y in (0, 1) for x in (0, 1)]
        lines += ["elements 1", "0 1 3 2 4 5 7 6  # trailing comment", "nodeset base 4", "0 1", "2 3"]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        mesh = read_mesh(str(path))
        assert mesh.n_elements == 1
        np.testing.assert_array_equal(mesh.node_sets["base"], [0, 1, 2, 3])

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError, match="not found"):
            read_mesh(str(tmp_path / "absent.mesh"))

    def test_unexpected_keyword(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_text("nodes 1\n0 0 0\nvertices 2\n", encoding="utf-8")
        with pytest.raises(MeshError, match="line 3"):
            read_mesh(str(path))

    def test_short_rows(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_text("nodes 2\n0 0 0\n1 1\nelements 0\n", encoding="utf-8")
        with pytest.raises(MeshError, match="rows of 3"):
            read_mesh(str(path))

    def test_index_out_of_range(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_text("nodes 1\n0 0 0\nelements 1\n0 0 0 0 0 0 0 9\n", encoding="utf-8")
        with pytest.raises(MeshError, match="out of range"):
            read_mesh(str(path))

    def test_requires_both_blocks(self, tmp_path):
        path = tmp_path / "bad.mesh"
        path.write_text("nodes 1\n0 0 0\n", encoding="utf-8")
        with pytest.raises(MeshError, match="required"):
            read_mesh(str(path))


class TestBcFiles:
    @pytest.fixture
    def cube(self):
        return build_structured_cube(2)

    @pytest.fixture
    def write_bc(self, tmp_path):
        """Fixture that returns a helper writing a boundary-condition document."""

        def _write(doc):
            path = tmp_path / "bc.json"
            path.write_text(json.dumps(doc), encoding="utf-8")
            return str(path)

        return _write

    def test_fixed_and_traction(self, cube, write_bc):
        dm = load_bc_file(write_bc({"fixed": [{"node_set": "z0"}],
                                    "traction": [{"facet_set": "z1", "traction": [0, 0, 1]}]}), cube)
        assert dm.constrained.size == 27
        assert dm.fixed[0].value == (0.0, 0.0, 0.0)
        assert dm.tractions[0].traction == (0.0, 0.0, 1.0)

    def test_twist_block(self, cube, write_bc):
        dm = load_bc_file(write_bc({"fixed": [{"node_set": "z0"}],
                                    "twist": [{"node_set": "z1", "angle": 1.0, "axial": 0.1}]}), cube)
        assert dm.twists[0].angle == 1.0
        assert dm.constrained.size == 54

    def test_value_count_must_match_components(self, cube, write_bc):
        path = write_bc({"fixed": [{"node_set": "z0", "components": [2], "value": [0.1, 0.2]}]})
        with pytest.raises(MeshError, match="one value per component"):
            load_bc_file(path, cube)

    def test_schema_error_names_field(self, cube, write_bc):
        path = write_bc({"twist": [{"node_set": "z1", "axis": 5}]})
        with pytest.raises(MeshError, match="twist.0.axis"):
            load_bc_file(path, cube)

    def test_invalid_json(self, cube, tmp_path):
        path = tmp_path / "bc.json"
        path.write_text("[", encoding="utf-8")
        with pytest.raises(MeshError, match="invalid JSON"):
            load_bc_file(str(path), cube)

    def test_missing_file(self, cube, tmp_path):
        with pytest.raises(MeshError, match="not found"):
            load_bc_file(str(tmp_path / "none.json"), cube)


def test_quad_cache_accepts_hand_built_mesh():
    nodes = np.array([[x, y, z] for z in (0.0, 2.0) for y in (0.0, 1.0) for x in (0.0, 1.0)])
    mesh = Mesh(nodes=nodes, elements=build_structured_cube(1).elements)
    assert build_quad_cache(mesh).weights.sum() == pytest.approx(2.0)
