"""Gradient masking noise and the differential-privacy calculators.

The mechanism itself is one line (add Gaussian noise to the sampled
gradient before transmitting the half-step); everything else here turns
(epsilon, delta) budgets into variance requirements and back. Two views
are provided: a per-iteration guarantee for a single masked gradient, and
an end-to-end loss over a whole run under a gradient bound.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import ConfigError
from .schedules import DecayingSchedule, StepSizeSchedule

__all__ = [
    "NoiseSpec",
    "DpBudget",
    "GlobalDpReport",
    "mask_gradient",
    "required_variance_local",
    "global_epsilon",
    "sensitivity_default",
]


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    """Per-coordinate variance cap for the masking noise."""

    variance: float
    dim: int = 1

    def __post_init__(self):
        if self.variance < 0:
            raise ConfigError(f"noise variance must be nonnegative, got {self.variance}")
        if self.dim < 1:
            raise ConfigError(f"dimension must be at least 1, got {self.dim}")


def mask_gradient(g: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """g plus zero-mean Gaussian noise at the spec variance.

    Zero variance is the exact identity and consumes no draws, so runs
    with and without masking share their gradient randomness.
    """
    g = np.asarray(g, dtype=float)
    if spec.variance == 0.0:
        return g.copy()
    return g + rng.normal(0.0, math.sqrt(spec.variance), size=g.shape)


def sensitivity_default(grad_bound: float) -> float:
    """Worst-case change of a bounded scalar gradient under a swap."""
    if grad_bound < 0:
        raise ConfigError(f"gradient bound must be nonnegative, got {grad_bound}")
    return 2.0 * grad_bound


def required_variance_local(
    eps: float, delta: float, delta_g: float, schedule: StepSizeSchedule
) -> float:
    """Smallest variance giving each masked gradient (eps, delta)-privacy.

    Uses the schedule's configured scale; a decaying schedule additionally
    divides by k0 squared because its first step is scale/k0. For a
    constant schedule the scale is the step itself, which is conservative
    whenever the run could have used a smaller step.
    """
    if not 0.0 < eps <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {eps}")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if delta_g <= 0:
        raise ConfigError(f"sensitivity must be positive, got {delta_g}")
    base = 2.0 * delta_g**2 * schedule.scale**2 * (math.log(1.25) - math.log(delta))
    base /= eps**2
    if isinstance(schedule, DecayingSchedule):
        base /= schedule.k0**2
    return base


@dataclasses.dataclass(frozen=True)
class DpBudget:
    """Inputs of the end-to-end privacy accounting."""

    delta: float
    grad_bound: float
    total_samples: int
    batch_size: int
    horizon: int
    epsilon: float | None = None
    sensitivity: float | None = None
    renyi_order: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.grad_bound < 0:
            raise ConfigError("gradient bound must be nonnegative")
        if self.batch_size < 1 or self.total_samples < self.batch_size:
            raise ConfigError(
                f"need 1 <= batch_size <= total_samples, got "
                f"{self.batch_size} and {self.total_samples}"
            )
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon must be positive when given")

    @property
    def effective_sensitivity(self) -> float:
        if self.sensitivity is not None:
            return self.sensitivity
        return sensitivity_default(self.grad_bound)


@dataclasses.dataclass(frozen=True)
class GlobalDpReport:
    """End-to-end loss plus the validity flags of its preconditions.

    A violated precondition does not hide the number; it marks it
    untrusted. renyi_ok is None when no divergence order was configured.
    """

    epsilon: float
    variance_ok: bool
    renyi_cap: float
    renyi_cap_positive: bool
    renyi_ok: bool | None
    preconditions_ok: bool


def global_epsilon(budget: DpBudget, variance: float) -> GlobalDpReport:
    """Privacy loss of a whole run of `horizon` iterations.

    epsilon = 20 B^2 K / (variance Q^2) + 2 B sqrt(20 K ln(1/delta)) /
    (sqrt(variance) Q), trusted only when variance >= 6 B^2 / batch^2 and
    the admissible divergence-order cap is positive (natural logs
    throughout).
    """
    if variance < 0:
        raise ConfigError("variance must be nonnegative")
    b, q, k = budget.grad_bound, budget.total_samples, budget.horizon

    if k == 0 or b == 0.0:
        eps = 0.0
    elif variance == 0.0:
        eps = math.inf
    else:
        eps = 20.0 * b**2 * k / (variance * q**2)
        eps += 2.0 * b * math.sqrt(20.0 * k * math.log(1.0 / budget.delta)) / (
            math.sqrt(variance) * q
        )

    variance_ok = variance >= 6.0 * b**2 / budget.batch_size**2
    if b == 0.0:
        cap = math.inf
    else:
        arg = budget.batch_size * (variance * q**2 / (4.0 * b**2) + 1.0) / q
        cap = -math.log(arg)
    cap_positive = cap > 0.0
    renyi_ok = None if budget.renyi_order is None else budget.renyi_order <= cap
    return GlobalDpReport(
        epsilon=eps,
        variance_ok=variance_ok,
        renyi_cap=cap,
        renyi_cap_positive=cap_positive,
        renyi_ok=renyi_ok,
        preconditions_ok=variance_ok and cap_positive and renyi_ok is not False,
    )
