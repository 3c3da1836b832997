"""ncm-fe: batch-vectorized finite elements with neural constitutive models."""

from .__version__ import __version__

__all__ = ["__version__"]
