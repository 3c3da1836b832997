"""Tests for constitutive.py: batch/point evaluation, CGO vs FD, path scans."""

from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.benchmarks import random_deformations
from src.constitutive import (
    energy,
    eval_batch,
    eval_gent_thomas,
    eval_point,
    eval_sweep,
    path_gammas,
    path_scan,
    reference_state,
    validate_definition,
)
from src.errors import BatchEvaluationError, DimensionMismatchError, KinematicDomainError
from src.models import KinematicConfig, MaterialBatch
from src.tensors import from_voigt, to_voigt


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


class TestGentThomas:
    def test_reference_state_is_stress_free(self):
        psi, tau, _ = eval_gent_thomas(np.eye(3))
        assert abs(psi) <= 1e-12
        assert np.max(np.abs(tau)) <= 1e-12

    def test_pure_dilation(self):
        psi, _, _ = eval_gent_thomas(2.0 * np.eye(3))
        assert psi == pytest.approx(49.0, abs=1e-10)

    def test_stress_is_energy_gradient(self, gent_thomas, near_identity):
        f = near_identity(1)[0]
        _, tau, _ = eval_point(gent_thomas, f)
        h = 1e-6
        p = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                e = np.zeros((3, 3))
                e[i, j] = h
                p[i, j] = (energy(gent_thomas, f + e) - energy(gent_thomas, f - e)) / (2.0 * h)
        np.testing.assert_allclose(from_voigt(tau), p @ f.T, rtol=1e-7, atol=1e-9)


class TestMaterialBatch:
    def test_rejects_overfill(self):
        batch = MaterialBatch(2)
        with pytest.raises(ValueError):
            batch.load(np.broadcast_to(np.eye(3), (3, 3, 3)))

    def test_rejects_zero_capacity(self):
        with pytest.raises(ValueError):
            MaterialBatch(0)

    def test_empty_batch_is_rejected(self, gent_thomas):
        with pytest.raises(ValueError, match="empty"):
            eval_batch(gent_thomas, MaterialBatch(4))

    def test_fills_live_rows_only(self, gent_thomas, near_identity):
        batch = MaterialBatch(8)
        batch.load(near_identity(3))
        eval_batch(gent_thomas, batch)
        assert np.all(batch.psi[3:] == 0.0)
        assert np.any(batch.tau[:3] != 0.0)


class TestBatchEqualsPoint:
    def test_bitwise_equal_for_bundled_models(self, bundled_model, rng):
        f = random_deformations(12, rng)
        psi, tau, c = eval_sweep(bundled_model, f, 12)
        for i in range(f.shape[0]):
            p, t, s = eval_point(bundled_model, f[i])
            assert p == psi[i]
            np.testing.assert_array_equal(t, tau[i])
            np.testing.assert_array_equal(s, c[i])

    @pytest.mark.parametrize("batch_size", [1, 5, 16])
    def test_sweep_independent_of_batch_size(self, random_model, rng, batch_size):
        f = random_deformations(16, rng)
        whole = eval_sweep(random_model, f, 16)
        split = eval_sweep(random_model, f, batch_size)
        for a, b in zip(whole, split, strict=True):
            np.testing.assert_array_equal(a, b)


class TestCgoAgainstFiniteDifferences:
    def _compare(self, model, f):
        _, tau, c = eval_sweep(model, f, f.shape[0])
        _, tau_fd, c_fd = eval_sweep(replace(model, derivative_mode="fd"), f, f.shape[0])
        assert _rel(tau, tau_fd) <= 1e-5
        assert _rel(c, c_fd) <= 1e-3

    def test_bundled_models(self, bundled_model, rng):
        self._compare(bundled_model, random_deformations(20, rng))

    def test_random_models(self, random_model, rng):
        self._compare(random_model, random_deformations(20, rng))

    def test_gent_thomas(self, gent_thomas, rng):
        self._compare(gent_thomas, random_deformations(20, rng))

    def test_fd_energy_matches_cgo(self, bundled_model, rng):
        f = random_deformations(5, rng)
        psi, _, _ = eval_sweep(bundled_model, f, 5)
        psi_fd, _, _ = eval_sweep(replace(bundled_model, derivative_mode="fd"), f, 5)
        np.testing.assert_array_equal(psi, psi_fd)


class TestSymmetryAndObjectivity:
    def test_stiffness_major_symmetry(self, random_model, rng):
        _, _, c = eval_sweep(random_model, random_deformations(10, rng), 10)
        np.testing.assert_array_equal(c, np.swapaxes(c, -1, -2))

    def test_stress_rotates_with_deformation(self, bundled_model, rng):
        f = random_deformations(10, rng)
        q = Rotation.random(10, rng).as_matrix()
        psi, tau, _ = eval_sweep(bundled_model, f, 10)
        psi_q, tau_q, _ = eval_sweep(bundled_model, np.einsum("nij,njk->nik", q, f), 10)
        expected = to_voigt(np.einsum("nij,njk,nlk->nil", q, from_voigt(tau), q))
        assert _rel(psi_q, psi) <= 1e-9
        assert _rel(tau_q, expected) <= 1e-9


class TestDomainErrors:
    def test_batch_error_names_point(self, gent_thomas):
        batch = MaterialBatch(4)
        f = np.broadcast_to(np.eye(3), (4, 3, 3)).copy()
        f[2] = np.diag([1.0, 1.0, -0.5])
        batch.load(f)
        with pytest.raises(BatchEvaluationError) as info:
            eval_batch(gent_thomas, batch)
        assert info.value.index == 2
        assert isinstance(info.value.cause, KinematicDomainError)

    def test_fd_mode_reports_same_index(self, gent_thomas):
        f = np.broadcast_to(np.eye(3), (3, 3, 3)).copy()
        f[1] = np.zeros((3, 3))
        with pytest.raises(BatchEvaluationError) as info:
            eval_sweep(replace(gent_thomas, derivative_mode="fd"), f, 3)
        assert info.value.index == 1

    def test_sweep_reports_global_index(self, gent_thomas):
        f = np.broadcast_to(np.eye(3), (10, 3, 3)).copy()
        f[7] = -np.eye(3)
        with pytest.raises(BatchEvaluationError) as info:
            eval_sweep(gent_thomas, f, 4)
        assert info.value.index == 7

    def test_point_raises_underlying_error(self, gent_thomas):
        with pytest.raises(KinematicDomainError):
            eval_point(gent_thomas, np.diag([1.0, -1.0, 1.0]))


class TestDefinitions:
    def test_width_mismatch_is_rejected(self):
        from src.weights import synthesize_weights

        model = synthesize_weights("micnn", rng=np.random.default_rng(0))
        narrow = replace(model, kinematics=KinematicConfig(invariants=("I1", "I2")))
        with pytest.raises(DimensionMismatchError, match="expects 3"):
            validate_definition(narrow)

    def test_reference_state_reports_residual_stress(self, bundled_model):
        psi, tau = reference_state(bundled_model)
        assert np.isfinite(psi)
        assert tau.shape == (6,)


class TestPathScan:
    def test_gammas(self):
        assert path_gammas(0.0, 10) == [0.0]
        assert path_gammas(0.5, 4) == [0.0, 0.125, 0.25, 0.375, 0.5]
        with pytest.raises(ValueError):
            path_gammas(0.5, 0)

    def test_rows(self, gent_thomas):
        rows = path_scan(gent_thomas, "ut", 0.5, 5)
        assert [r.path for r in rows] == ["UT"] * 6
        assert rows[0].psi == pytest.approx(0.0, abs=1e-12)
        assert all(r.psi > 0.0 for r in rows[1:])

    def test_strict_raises_on_domain_violation(self, gent_thomas):
        with pytest.raises(KinematicDomainError):
            path_scan(gent_thomas, "UT", -1.0, 2)

    def test_lenient_marks_row(self, gent_thomas):
        rows = path_scan(gent_thomas, "UT", -1.0, 2, strict=False)
        assert np.isnan(rows[-1].psi)
        assert "gamma > -1" in rows[-1].error
        assert np.isfinite(rows[0].psi)
