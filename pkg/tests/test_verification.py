"""Tests for verification.py: individual property checks and the verify suite."""

from unittest.mock import patch

import numpy as np
import pytest

from src.benchmarks import random_deformations
from src.errors import KinematicDomainError
from src.mesh import twist_cube_model
from src.models import InnerEval
from src.verification import (
    PATCH_TOL,
    _check,
    assembly_mismatches,
    batch_point_mismatches,
    cann_offdiagonal,
    cgo_vs_fd,
    convexity_violation,
    corrupted_weight_rejection,
    energy_gradient_error,
    gent_thomas_anchor_error,
    objectivity_error,
    partition_of_unity_error,
    patch_test_error,
    random_displacement,
    random_weight_cgo_vs_fd,
    random_weight_convexity,
    reference_agreement,
    run_verify,
    tangent_error,
    verify_models,
)
from src.weights import load_model


class TestCheckWrapper:
    def test_pass_and_fail(self):
        assert _check("ok", 1e-3, lambda: (1e-4, "")).passed
        failed = _check("bad", 1e-3, lambda: (1e-2, "detail"))
        assert not failed.passed
        assert failed.max_error == 1e-2
        assert failed.detail == "detail"

    def test_non_finite_error_fails(self):
        assert not _check("nan", 1.0, lambda: (float("nan"), "")).passed

    def test_raising_check_is_reported(self):
        def boom():
            raise KinematicDomainError("det F = -1 is not above 1e-12", index=3)

        check = _check("raises", 1.0, boom)
        assert not check.passed
        assert "det F" in check.detail


class TestMaterialPointChecks:
    def test_gent_thomas_anchors(self):
        reference, dilation = gent_thomas_anchor_error()
        assert reference <= 1e-12
        assert dilation <= 1e-10

    def test_bundled_models_pass(self, bundled_model, rng):
        f = random_deformations(20, rng)
        tau_err, c_err = cgo_vs_fd(bundled_model, f)
        assert tau_err <= 1e-5
        assert c_err <= 1e-3
        assert batch_point_mismatches(bundled_model, f[:5]) == 0
        assert objectivity_error(bundled_model, f, rng) <= 1e-9

    def test_convexity_of_networks(self, rng):
        f = random_deformations(30, rng)
        for name in ("micnn-example", "ickan-example"):
            assert convexity_violation(load_model(name), f, rng) <= 1e-10

    def test_concave_network_breaks_secant_inequality(self, rng):
        def concave(architecture, weights, k):
            return InnerEval(value=-np.sum(k * k, axis=-1), grad=-2.0 * k, hess=np.zeros(k.shape + k.shape[-1:]))

        with patch("src.verification.eval_inner", side_effect=concave):
            assert convexity_violation(load_model("micnn-example"), random_deformations(30, rng), rng) > 0.0

    def test_decreasing_network_breaks_monotonicity(self, rng):
        def decreasing(architecture, weights, k):
            return InnerEval(value=-np.sum(k, axis=-1), grad=-np.ones_like(k), hess=np.zeros(k.shape + k.shape[-1:]))

        with patch("src.verification.eval_inner", side_effect=decreasing):
            assert convexity_violation(load_model("ickan-example"), random_deformations(30, rng), rng) > 1e-3

    @pytest.mark.parametrize("arch", ["micnn", "ickan"])
    def test_random_weight_sets_are_convex(self, arch):
        assert random_weight_convexity(arch, 15, seed=4) <= 1e-10

    @pytest.mark.parametrize("arch", ["micnn", "cann", "ickan"])
    def test_random_weight_triples_match_finite_differences(self, arch):
        tau_err, c_err = random_weight_cgo_vs_fd(arch, 8, seed=4)
        assert tau_err <= 1e-5
        assert c_err <= 1e-3

    def test_cann_hessian_is_diagonal(self, rng):
        assert cann_offdiagonal(load_model("cann-gent-thomas"), random_deformations(10, rng)) == 0.0

    def test_partition_of_unity(self):
        assert partition_of_unity_error(load_model("ickan-example").weights) <= 1e-12

    def test_cann_tracks_reference(self):
        assert reference_agreement(load_model("cann-gent-thomas")) <= 0.05

    def test_corrupted_weight_file_is_rejected(self):
        error, detail = corrupted_weight_rejection()
        assert error == 0.0
        assert detail.startswith("layers[1].a")

    def test_verify_models(self):
        models = verify_models(1)
        assert len(models) == 6
        assert [m.name for m in models[3:]] == ["random-micnn", "random-cann", "random-ickan"]


class TestFeChecks:
    def test_assembly_variants_agree(self, gent_thomas, rng):
        fe = twist_cube_model(2)
        assert assembly_mismatches(gent_thomas, fe, random_displacement(fe, rng)) == []

    def test_tangent_and_energy(self, gent_thomas, rng):
        fe = twist_cube_model(1)
        u = random_displacement(fe, rng)
        assert tangent_error(gent_thomas, fe, u, rng, columns=6) <= 1e-5
        assert energy_gradient_error(gent_thomas, fe, u) <= 1e-5

    def test_patch_test(self, gent_thomas):
        h = np.array([[0.05, 0.01, 0.0], [0.0, -0.03, 0.02], [0.04, 0.0, 0.06]])
        spread, residual = patch_test_error(gent_thomas, 3, h)
        assert spread <= PATCH_TOL
        assert residual <= PATCH_TOL


class TestRunVerify:
    def test_quick_suite_passes(self):
        report = run_verify(quick=True)
        failed = [c.name for c in report.checks if not c.passed]
        assert failed == []
        assert report.passed
        names = {c.name for c in report.checks}
        assert {"assembly_equality", "patch_test", "weight_file_rejection", "energy_gradient"} <= names
        assert "reference_agreement[cann-gent-thomas]" in names
        assert "convexity_random_weights[ickan]" in names
        assert "cgo_vs_fd_random_weights_stiffness[cann]" in names

    def test_failed_check_fails_report(self):
        with patch("src.verification.assembly_mismatches", return_value=["batch(batch=1, workers=1)"]):
            report = run_verify(quick=True)
        assert not report.passed
        equality = next(c for c in report.checks if c.name == "assembly_equality")
        assert "batch(batch=1" in equality.detail

    @pytest.mark.slow
    def test_full_suite_passes(self):
        assert run_verify().passed
