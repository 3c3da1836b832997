"""Tests for tensors.py: Voigt conversions, 3x3 helpers and push-forwards."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.errors import DimensionMismatchError
from src.tensors import (
    det3,
    from_voigt,
    full_to_stiffness,
    identity_voigt,
    inv3,
    left_cauchy_green,
    mat3_mul,
    push_forward_stiffness,
    push_forward_stress,
    right_cauchy_green,
    stiffness_to_full,
    sym_matvec,
    sym_outer,
    sym_square,
    sym_trace,
    tensor_prod,
    tensor_prod_bar,
    to_voigt,
)

_entries = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False, allow_infinity=False)
matrices = arrays(np.float64, (3, 3), elements=_entries)
stacks = arrays(np.float64, (5, 3, 3), elements=_entries)


def _sym(m):
    return 0.5 * (m + m.T)


class TestVoigt:
    def test_slot_order(self):
        m = np.array([[1.0, 4.0, 6.0], [4.0, 2.0, 5.0], [6.0, 5.0, 3.0]])
        np.testing.assert_array_equal(to_voigt(m), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])

    @given(matrices)
    def test_from_voigt_inverts_to_voigt_on_symmetric(self, m):
        s = _sym(m)
        np.testing.assert_array_equal(from_voigt(to_voigt(s)), s)

    def test_identity(self):
        np.testing.assert_array_equal(identity_voigt(), [1, 1, 1, 0, 0, 0])
        assert identity_voigt((4, 2)).shape == (4, 2, 6)

    def test_stiffness_to_full_has_minor_symmetries(self, rng):
        c = rng.standard_normal((6, 6))
        full = stiffness_to_full(c)
        np.testing.assert_array_equal(full, np.swapaxes(full, 0, 1))
        np.testing.assert_array_equal(full, np.swapaxes(full, 2, 3))
        assert full[0, 1, 1, 2] == c[3, 4]

    def test_full_to_stiffness_inverts_expansion(self, rng):
        c = rng.standard_normal((2, 6, 6))
        np.testing.assert_allclose(full_to_stiffness(stiffness_to_full(c)), c, rtol=1e-14)


class TestDense3x3:
    @given(matrices)
    def test_det_matches_numpy(self, m):
        np.testing.assert_allclose(det3(m), np.linalg.det(m), atol=1e-10)

    def test_inverse(self, rng):
        f = np.eye(3) + 0.2 * rng.standard_normal((10, 3, 3))
        np.testing.assert_allclose(mat3_mul(inv3(f), f), np.broadcast_to(np.eye(3), f.shape), atol=1e-12)

    def test_cauchy_green(self, rng):
        f = np.eye(3) + 0.3 * rng.standard_normal((4, 3, 3))
        np.testing.assert_allclose(from_voigt(left_cauchy_green(f)), f @ np.swapaxes(f, 1, 2), atol=1e-14)
        np.testing.assert_allclose(from_voigt(right_cauchy_green(f)), np.swapaxes(f, 1, 2) @ f, atol=1e-14)

    def test_sym_helpers(self, rng):
        a = _sym(rng.standard_normal((3, 3)))
        x = rng.standard_normal(3)
        v = to_voigt(a)
        assert sym_trace(v) == pytest.approx(np.trace(a))
        np.testing.assert_allclose(from_voigt(sym_square(v)), a @ a, atol=1e-14)
        np.testing.assert_allclose(sym_matvec(v, x), a @ x, atol=1e-14)

    @settings(max_examples=25)
    @given(stacks)
    def test_stacked_rows_equal_single_rows_bitwise(self, f):
        whole_det = det3(f)
        whole_prod = mat3_mul(f, f)
        whole_b = left_cauchy_green(f)
        for i in range(f.shape[0]):
            single = f[i : i + 1]
            assert det3(single)[0] == whole_det[i]
            np.testing.assert_array_equal(mat3_mul(single, single)[0], whole_prod[i])
            np.testing.assert_array_equal(left_cauchy_green(single)[0], whole_b[i])


class TestProducts:
    def test_sym_outer(self, rng):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        expected = 0.5 * (np.outer(a, b) + np.outer(b, a))
        np.testing.assert_allclose(from_voigt(sym_outer(a, b)), expected, atol=1e-15)

    def test_tensor_prod(self, rng):
        a = to_voigt(_sym(rng.standard_normal((3, 3))))
        b = to_voigt(_sym(rng.standard_normal((3, 3))))
        np.testing.assert_array_equal(tensor_prod(a, b), np.outer(a, b))

    def test_tensor_prod_bar_components(self, rng):
        m = rng.standard_normal((3, 3))
        a = m @ m.T + np.eye(3)
        full = stiffness_to_full(tensor_prod_bar(to_voigt(a), to_voigt(a)))
        expected = 0.5 * (np.einsum("ik,jl->ijkl", a, a) + np.einsum("il,jk->ijkl", a, a))
        np.testing.assert_allclose(full, expected, atol=1e-13)

    def test_identity_bar_identity(self):
        i = identity_voigt()
        ibar = tensor_prod_bar(i, i)
        np.testing.assert_allclose(np.diag(ibar), [1.0, 1.0, 1.0, 0.5, 0.5, 0.5])
        assert np.count_nonzero(ibar - np.diag(np.diag(ibar))) == 0


class TestPushForward:
    def test_stress_is_twice_weighted_sum(self, rng):
        dpsi = rng.standard_normal((4, 2))
        g = rng.standard_normal((4, 2, 6))
        expected = 2.0 * (dpsi[:, 0, None] * g[:, 0] + dpsi[:, 1, None] * g[:, 1])
        np.testing.assert_allclose(push_forward_stress(dpsi, g), expected, atol=1e-14)

    def test_stress_rejects_mismatched_widths(self):
        with pytest.raises(DimensionMismatchError):
            push_forward_stress(np.zeros(3), np.zeros((2, 6)))

    def test_stiffness_has_exact_major_symmetry(self, rng):
        dpsi = rng.standard_normal((3, 3))
        h = rng.standard_normal((3, 3, 3))
        d2psi = h + np.swapaxes(h, -1, -2)
        g = rng.standard_normal((3, 3, 6))
        gg = rng.standard_normal((3, 3, 6, 6))
        c = push_forward_stiffness(dpsi, d2psi, g, gg)
        np.testing.assert_array_equal(c, np.swapaxes(c, -1, -2))

    def test_stiffness_rejects_mismatched_shapes(self):
        with pytest.raises(DimensionMismatchError):
            push_forward_stiffness(np.zeros(2), np.zeros((3, 3)), np.zeros((2, 6)), np.zeros((2, 6, 6)))
