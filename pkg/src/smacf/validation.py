"""Input validation helpers and the package error taxonomy.

Errors are split by where the fault lies so the CLI can map them to
distinct exit codes: bad parameters or config files raise
:class:`ConfigError`, unreadable or corrupt data raises :class:`DataError`,
and a training run that blows up raises :class:`DivergenceError`.
"""

from __future__ import annotations

import numpy as np


class ConfigError(ValueError):
    """A parameter or configuration value violates its contract."""


class DataError(ValueError):
    """An input file or dataset is missing, malformed, or inconsistent."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite metric; names the offending epoch."""

    def __init__(self, epoch: int, metric: str):
        self.epoch = epoch
        self.metric = metric
        super().__init__(f"training diverged at epoch {epoch}: {metric} is not finite")


def check_positive(name: str, value, strict: bool = True) -> None:
    ok = value > 0 if strict else value >= 0
    if not ok:
        bound = "> 0" if strict else ">= 0"
        raise ConfigError(f"{name} must be {bound}, got {value!r}")


def check_ratio(name: str, value) -> None:
    if not (0.0 < value < 1.0):
        raise ConfigError(f"{name} must lie strictly between 0 and 1, got {value!r}")


def check_selection_probability(name: str, p) -> None:
    if not (0.5 < p <= 1.0):
        raise ConfigError(f"{name} must satisfy 0.5 < p <= 1, got {p!r}")


def check_choice(name: str, value, options) -> None:
    if value not in options:
        raise ConfigError(f"{name} must be one of {sorted(options)}, got {value!r}")


def check_indices(name: str, idx, bound: int) -> np.ndarray:
    """Validate dense indices against [0, bound); returns them as an int array."""
    arr = np.asarray(idx)
    if arr.size and (arr.min() < 0 or arr.max() >= bound):
        raise IndexError(f"{name} out of bounds for dimension {bound}")
    return arr
