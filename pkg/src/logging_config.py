"""
Logging for ncm-fe runs.

``setup_logging`` points the ``src`` logger hierarchy at a rotating file
named after the subcommand (``solve.log``, ``fe-bench.log``, ...) in the
platform log directory, so a long benchmark sweep never rotates away the
log of a solve.  Warnings also go to stderr.

``src.solver`` writes one INFO line per converged load step and DEBUG lines
per Newton and CG iteration; ``src.benchmarks`` writes one INFO line per
timed cell.  The user config file can set single subsystems apart from the
global level::

    {"logging": {"level": "INFO", "loggers": {"src.solver": "DEBUG"}}}
"""

from __future__ import annotations

import json
import logging
import logging.handlers
import os

from . import constants
from .__version__ import __version__
from .constants import (
    DEFAULT_LOG_LEVEL,
    LOG_BACKUP_COUNT,
    LOG_MAX_BYTES,
)
from .schemas import RunConfig

logger = logging.getLogger(__name__)

_LOG_FORMAT = "%(asctime)s  %(levelname)-8s  %(name)s  %(message)s"
_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

_VALID_LEVELS = frozenset({"DEBUG", "INFO", "WARNING", "ERROR"})


def log_file_for(command: str | None) -> str:
    """Rotating log path of ``command``; the shared ``ncm-fe.log`` without one."""
    if not command:
        return constants.NCMFE_LOG_FILE
    return os.path.join(constants.NCMFE_LOG_DIR, f"{command}.log")


def _level(name: object) -> str | None:
    if isinstance(name, str) and name.upper() in _VALID_LEVELS:
        return name.upper()
    return None


def _user_logging_section() -> dict:
    """The ``logging`` object of the user config file, or ``{}``."""
    try:
        with open(constants.NCMFE_CONFIG_PATH, encoding="utf-8") as f:
            section = json.load(f).get("logging", {})
    except (OSError, ValueError, AttributeError):
        return {}
    return section if isinstance(section, dict) else {}


def _attach_file_handler(root: logging.Logger, path: str) -> None:
    target = os.path.abspath(path)
    for handler in [h for h in root.handlers if isinstance(h, logging.handlers.RotatingFileHandler)]:
        if handler.baseFilename != target:
            root.removeHandler(handler)
            handler.close()
    if any(isinstance(h, logging.handlers.RotatingFileHandler) for h in root.handlers):
        return
    handler = logging.handlers.RotatingFileHandler(
        target,
        maxBytes=LOG_MAX_BYTES,
        backupCount=LOG_BACKUP_COUNT,
        encoding="utf-8",
    )
    handler.setFormatter(logging.Formatter(_LOG_FORMAT, datefmt=_DATE_FORMAT))
    root.addHandler(handler)


def setup_logging(
    level: str | None = None,
    command: str | None = None,
    log_file: str | None = None,
) -> str:
    """Configure the ``src`` logger hierarchy and return the log file path.

    Parameters
    ----------
    level:
        Level name (DEBUG, INFO, WARNING, ERROR).  An unknown or missing
        name falls back to ``logging.level`` in the user config file, then
        :data:`DEFAULT_LOG_LEVEL`.
    command:
        Subcommand whose log file to use (see :func:`log_file_for`).
    log_file:
        Explicit path, overriding ``command``.

    Calling again with another file swaps the file handler; handlers are
    never stacked.
    """
    user = _user_logging_section()
    resolved_level = _level(level) or _level(user.get("level")) or DEFAULT_LOG_LEVEL
    path = log_file or log_file_for(command)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    root = logging.getLogger("src")
    root.setLevel(resolved_level)
    _attach_file_handler(root, path)

    if not any(
        isinstance(h, logging.StreamHandler)
        and not isinstance(h, logging.handlers.RotatingFileHandler)
        for h in root.handlers
    ):
        console = logging.StreamHandler()
        console.setLevel(logging.WARNING)
        console.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        root.addHandler(console)

    overrides = user.get("loggers") or {}
    for name, value in overrides.items() if isinstance(overrides, dict) else ():
        sub_level = _level(value)
        if not (name == "src" or str(name).startswith("src.")) or sub_level is None:
            logger.warning("ignoring logging.loggers entry %r: %r", name, value)
            continue
        logging.getLogger(name).setLevel(sub_level)
    return path


def log_run_header(command: str, config: RunConfig) -> None:
    """One INFO line tying the log to a run: version, subcommand and the resolved flags."""
    logger.info(
        "ncm-fe %s %s %s",
        __version__,
        command,
        json.dumps(config.model_dump(exclude_none=True), sort_keys=True),
    )
