"""Step-size schedules shared by the engine and the privacy calculators."""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigError

__all__ = ["DecayingSchedule", "ConstantSchedule", "StepSizeSchedule"]


def _as_steps(k):
    arr = np.asarray(k, dtype=float)
    return arr


@dataclasses.dataclass(frozen=True)
class DecayingSchedule:
    """alpha_k = scale / (k + k0)."""

    scale: float
    k0: int

    kind = "decaying"

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError(f"step-size scale must be positive, got {self.scale}")
        if self.k0 < 1:
            raise ConfigError(f"decay offset k0 must be at least 1, got {self.k0}")

    def alpha(self, k):
        out = self.scale / (_as_steps(k) + self.k0)
        return float(out) if out.ndim == 0 else out


@dataclasses.dataclass(frozen=True)
class ConstantSchedule:
    """alpha_k = scale for every round."""

    scale: float

    kind = "constant"

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError(f"step-size scale must be positive, got {self.scale}")

    def alpha(self, k):
        out = np.full(_as_steps(k).shape, self.scale)
        return float(out) if out.ndim == 0 else out


StepSizeSchedule = DecayingSchedule | ConstantSchedule
