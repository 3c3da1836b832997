"""Shared pytest fixtures for the test suite."""

import numpy as np
import pytest

from src.constitutive import gent_thomas_definition
from src.mesh import twist_cube_model
from src.weights import bundled_weight_files, load_model, synthesize_weights


@pytest.fixture
def rng():
    """Seeded generator so every test draws the same samples."""
    return np.random.default_rng(1234)


@pytest.fixture
def gent_thomas():
    return gent_thomas_definition()


@pytest.fixture(params=sorted(bundled_weight_files()))
def bundled_model(request):
    """Each bundled example weight file in turn."""
    return load_model(request.param)


@pytest.fixture(params=["micnn", "cann", "ickan"])
def random_model(request):
    """Seeded random weights for each architecture."""
    return synthesize_weights(request.param, rng=np.random.default_rng(7))


@pytest.fixture
def cube2():
    """Twist cube with 2x2x2 elements."""
    return twist_cube_model(2)


@pytest.fixture
def near_identity(rng):
    """Fixture that returns a helper drawing ``F = I + scale * G`` stacks."""

    def _draw(n, scale=0.1):
        return np.eye(3) + scale * rng.standard_normal((n, 3, 3))

    return _draw
