"""Version information for ncm-fe."""

__version__ = "0.4.0"
