"""
Centralised constants for ncm-fe.

All tolerances, finite-difference steps, default benchmark parameters,
Voigt index tables and file-system paths live here so they are easy to
find, tune, and test.
"""

from __future__ import annotations

import os

import numpy as np
import platformdirs


# ── Voigt notation ────────────────────────────────────────────────────────────
# Stress-like Voigt everywhere: (11, 22, 33, 12, 23, 13), no factor 2 on shear.

VOIGT_PAIRS: tuple[tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))
"""Tensor index pair (i, j) for each Voigt slot."""

VOIGT_INDEX = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2]], dtype=np.intp)
"""Voigt slot for each tensor index pair (i, j); symmetric by construction."""

VOIGT_I = np.array([p[0] for p in VOIGT_PAIRS], dtype=np.intp)
VOIGT_J = np.array([p[1] for p in VOIGT_PAIRS], dtype=np.intp)

VOIGT_SIZE = 6
MAT3_SIZE = 9

IDENTITY_VOIGT = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])

# ── Kinematics ────────────────────────────────────────────────────────────────

MIN_JACOBIAN = 1e-12
"""Deformation gradients with det F at or below this are rejected, never clamped."""

UNIT_VECTOR_TOL = 1e-12
"""Allowed deviation of a structural vector norm from 1."""

ISOCHORIC_EXPONENT_LINEAR = -1.0 / 3.0
"""Exponent e_m on I3 for invariants linear in C (I1, I4)."""

ISOCHORIC_EXPONENT_QUADRATIC = -2.0 / 3.0
"""Exponent e_m on I3 for invariants quadratic in C (I2, I5)."""

# ── Finite differences ────────────────────────────────────────────────────────

FD_GRADIENT_STEP = 1e-6
"""Relative central-difference step for first derivatives."""

FD_HESSIAN_STEP = 1e-4
"""Relative central-difference step for second derivatives."""

# ── Inner networks ────────────────────────────────────────────────────────────

ICKAN_DEFAULT_ORDER = 3
ICKAN_DEFAULT_BASIS = 8
ICKAN_DEFAULT_RANGE = (-1.0, 4.0)

KNOT_UNIFORMITY_TOL = 1e-9
"""Relative tolerance when checking that an explicit knot vector is uniform."""

CANN_F0 = ("identity", "macaulay", "abs")
CANN_F1 = ("power1", "power2", "power3")
CANN_F2 = ("linear", "exp", "log")

ARCHITECTURES = ("micnn", "cann", "ickan")

DERIVATIVE_MODES = ("cgo", "fd")
"""cgo = analytic one-pass derivatives; fd = finite-difference baseline on Psi(F)."""

# ── Finite elements ───────────────────────────────────────────────────────────

NODES_PER_ELEMENT = 8
QP_PER_ELEMENT = 8
DOFS_PER_NODE = 3
DOFS_PER_ELEMENT = NODES_PER_ELEMENT * DOFS_PER_NODE

GAUSS_POINT = 1.0 / np.sqrt(3.0)
"""Abscissa of the 2-point Gauss rule on [-1, 1] (weights are 1)."""

HEX8_CORNERS = np.array(
    [
        [-1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ]
)
"""Reference coordinates of the hex8 nodes, bottom face then top face."""

ASSEMBLY_MODES = ("trad", "global", "batch", "partitioned")

# ── Solver defaults ───────────────────────────────────────────────────────────

NEWTON_ABS_TOL = 1e-8
NEWTON_REL_TOL = 1e-10
NEWTON_MAX_ITERATIONS = 25
NEWTON_LOAD_STEPS = 10
NEWTON_MAX_HALVINGS = 4

CG_REL_TOL = 1e-10
CG_MAX_ITERATIONS = 20_000

# ── Twist-cube benchmark ──────────────────────────────────────────────────────

TWIST_AXIAL_DISPLACEMENT = 1.0
"""Axial displacement of the moving face at full load."""

TWIST_ANGLE = np.pi
"""Rotation of the moving face at full load (a half turn)."""

# ── Harness defaults ──────────────────────────────────────────────────────────

DEFAULT_SEED = 20_240_917

DEFAULT_MODEL = "micnn-example"
"""Bundled weight file used by matpoint-bench and path-scan when --model is absent."""

DEFAULT_FE_MODEL = "gent-thomas"
"""Model used by fe-bench and solve when --model is absent."""

DEFAULT_FE_ASSEMBLIES: tuple[str, ...] = ("trad", "batch")
DEFAULT_BATCH_SIZES: tuple[int, ...] = (1, 32, 1024)
DEFAULT_POINT_COUNTS: tuple[int, ...] = (1024,)
DEFAULT_MESH_SIZES: tuple[int, ...] = (4,)
DEFAULT_REPETITIONS = 3
DEFAULT_FE_BATCH = 512
DEFAULT_PATH_STEPS = 20
DEFAULT_GAMMA_MAX = 0.5

RANDOM_F_SCALE = 0.2
"""F = I + RANDOM_F_SCALE * G with G standard normal."""

RANDOM_F_MIN_DET = 0.2
"""Random deformation gradients with det F at or below this are redrawn."""

CSV_SCHEMA_VERSION = 2
"""Bumped whenever benchmark CSV columns change."""

LOADING_PATHS = ("UT", "UC", "BT", "BC", "SS", "PS")

# ── File-system paths ─────────────────────────────────────────────────────────

PKG_DIR = os.path.dirname(os.path.abspath(__file__))
BUNDLED_WEIGHTS_DIR = os.path.join(PKG_DIR, "data", "weights")

GENT_THOMAS_MODEL = "gent-thomas"
"""Pseudo model path selecting the analytic reference model."""

# Config and logs use OS-standard locations via platformdirs:
#   Linux:    ~/.config/ncm-fe/  and  ~/.local/state/ncm-fe/log/
#   macOS:    ~/Library/Application Support/ncm-fe/  and  ~/Library/Logs/ncm-fe/
NCMFE_CONFIG_DIR = platformdirs.user_config_dir("ncm-fe", appauthor=False)
NCMFE_CONFIG_PATH = os.path.join(NCMFE_CONFIG_DIR, "ncm-fe-config.json")
NCMFE_LOG_DIR = platformdirs.user_log_dir("ncm-fe", appauthor=False)
NCMFE_LOG_FILE = os.path.join(NCMFE_LOG_DIR, "ncm-fe.log")

# ── Logging ───────────────────────────────────────────────────────────────────

LOG_MAX_BYTES = 5 * 1024 * 1024
"""Max size of a single log file before rotation (5 MB)."""

LOG_BACKUP_COUNT = 3
"""Number of rotated log files to keep (ncm-fe.log.1, .2, .3)."""

DEFAULT_LOG_LEVEL = "INFO"
"""Default logging level when not overridden by config or CLI."""
