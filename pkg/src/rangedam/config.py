"""Precision mode and line-oriented ``key = value`` config files.

Two precision modes exist: ``verify`` computes in float64 and validates
finiteness after every tape op (all verification suites run here), ``fast``
computes in float32 and skips the per-op checks.  The initial mode comes from
the RANGE_DAM_PRECISION environment variable and can be switched at runtime.
"""

from __future__ import annotations

import contextlib
import os
from pathlib import Path

import numpy as np

from .errors import ValidationError

PRECISION_ENV = "RANGE_DAM_PRECISION"
_MODES = {"verify": np.float64, "fast": np.float32}


def _initial_mode() -> str:
    mode = os.environ.get(PRECISION_ENV, "verify").strip().lower()
    return mode if mode in _MODES else "verify"


_mode = _initial_mode()


def precision_mode() -> str:
    return _mode


def set_precision(mode: str) -> None:
    global _mode
    if mode not in _MODES:
        raise ValidationError(f"unknown precision mode {mode!r}; expected one of {sorted(_MODES)}")
    _mode = mode


def active_dtype() -> np.dtype:
    return np.dtype(_MODES[_mode])


def verification_enabled() -> bool:
    return _mode == "verify"


@contextlib.contextmanager
def precision(mode: str):
    """Temporarily switch the precision mode."""
    previous = _mode
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(previous)


def load_config(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` config file.

    Blank lines and lines starting with ``#`` are skipped; values keep their
    textual form and are coerced by the consumer.
    """
    settings: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        settings[key.strip()] = value.strip()
    return settings
