"""Benchmark objectives and global problem assembly.

The shipped benchmark spreads ten scalar function families over the agent
set, ten agents per family. Each family is an expectation over two draws
u ~ N(1, u_std^2) and v ~ N(0, v_std^2): u scales every x-dependent term,
so the stochastic gradient is u times a deterministic core, and v only
offsets the sampled value. The reliable-agent average is nonconvex but
gradient dominated, which is exactly the regime the step-size theory
covers.

Every family is a linear combination of eight basis terms; coefficient
rows live in _U_COEFFS and make batched evaluation a matrix product.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BrokenOptimumError, ConfigError

__all__ = [
    "LocalObjective",
    "GlobalProblem",
    "family_objective",
    "benchmark_problem",
    "custom_problem",
    "estimate_sigma_zeta",
    "pl_constant_probe",
    "estimate_smoothness",
    "minimize_scalar_grid",
]

N_FAMILIES = 10

# Basis order: sqrt(x^4+3), cos^2 x, sin x, (x^2+2)^(1/3), x^2/sqrt(x^2+1),
# sin^2 x, x^2, constant 1. All basis terms are multiplied by the u draw.
_U_COEFFS = np.array(
    [
        [0.2, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 2.0, -0.1, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0],
        [-0.1, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, -0.2, 2.0, 0.0, 0.0],
        [-0.1, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0],
        [0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.2, 0.0, 2.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0, 0.0],
    ]
)
# Additive v draw: present in every family except the first.
_V_COEFFS = np.array([0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])


def _basis_values(x):
    x = np.asarray(x, dtype=float)
    sq = x * x
    s = np.sin(x)
    c = np.cos(x)
    return np.stack(
        [
            np.sqrt(sq * sq + 3.0),
            c * c,
            s,
            np.cbrt(sq + 2.0),
            sq / np.sqrt(sq + 1.0),
            s * s,
            sq,
            np.ones_like(x),
        ]
    )


def _basis_cores(x):
    """Derivatives of the basis terms; the u-scaled sum is the gradient."""
    x = np.asarray(x, dtype=float)
    sq = x * x
    s2 = np.sin(2.0 * x)
    return np.stack(
        [
            2.0 * x * sq / np.sqrt(sq * sq + 3.0),
            -s2,
            np.cos(x),
            (2.0 * x / 3.0) * np.cbrt(sq + 2.0) ** -2,
            x * (sq + 2.0) / np.sqrt(sq + 1.0) ** 3,
            s2,
            2.0 * x,
            np.zeros_like(x),
        ]
    )


@dataclasses.dataclass(frozen=True)
class LocalObjective:
    """One agent's objective: expectation plus its stochastic oracle.

    ``sample_gradient(x, rng)`` draws the (u, v) pair and returns the
    gradient at that draw; ``sample_value(x, u, v)`` is the pure sampled
    value for replay-style checks.
    """

    agent: int
    family: int | str
    expected_value: Callable
    expected_gradient: Callable
    sample_value: Callable
    sample_gradient: Callable


def family_objective(
    agent: int, family: int, u_std: float = 0.1, v_std: float = 0.1
) -> LocalObjective:
    """Build one benchmark-family objective for an agent."""
    if not 1 <= family <= N_FAMILIES:
        raise ConfigError(f"family must be 1..{N_FAMILIES}, got {family}")
    cu = _U_COEFFS[family - 1]
    cv = float(_V_COEFFS[family - 1])

    def expected_value(x):
        return cu @ _basis_values(x)

    def expected_gradient(x):
        return cu @ _basis_cores(x)

    def sample_value(x, u, v):
        return u * (cu @ _basis_values(x)) + cv * v

    def sample_gradient(x, rng):
        u = rng.normal(1.0, u_std)
        rng.normal(0.0, v_std)  # v draw keeps value/gradient streams aligned
        return u * (cu @ _basis_cores(x))

    return LocalObjective(
        agent=agent,
        family=family,
        expected_value=expected_value,
        expected_gradient=expected_gradient,
        sample_value=sample_value,
        sample_gradient=sample_gradient,
    )


def minimize_scalar_grid(fun, lo=-10.0, hi=10.0, coarse=1e-4, xtol=1e-12):
    """Global scalar minimum: brute grid scan, then golden-section refine.

    ``fun`` must accept a numpy array. Returns (x_min, f_min).
    """
    xs = np.arange(lo, hi + coarse, coarse)
    vals = np.asarray(fun(xs), dtype=float)
    i = int(np.argmin(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, len(xs) - 1)]
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc = float(fun(np.array([c]))[0])
    fd = float(fun(np.array([d]))[0])
    while b - a > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = float(fun(np.array([c]))[0])
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = float(fun(np.array([d]))[0])
    x = 0.5 * (a + b)
    return x, float(fun(np.array([x]))[0])


@dataclasses.dataclass(frozen=True)
class GlobalProblem:
    """Reliable-agent average objective with its landscape constants.

    ``objectives`` covers every agent (a Byzantine agent running the honest
    protocol still needs its own oracle); the global objective, optimum,
    and constants are over the reliable subset only.
    """

    objectives: tuple
    reliable: tuple
    dim: int
    f_star: float
    x_star: float | None
    pl_constant: float
    smoothness: float
    sigma_sq: float
    zeta_sq: float
    u_std: float
    v_std: float
    # (n_agents, 8) family coefficients when every objective is a benchmark
    # family; None disables the vectorized paths.
    u_coeffs: np.ndarray | None = None
    mean_u_coeffs: np.ndarray | None = None

    @property
    def n_agents(self) -> int:
        return len(self.objectives)

    @property
    def locals(self) -> tuple:
        return tuple(self.objectives[i] for i in self.reliable)

    def f(self, x):
        """Average expected value over reliable agents."""
        if self.mean_u_coeffs is not None:
            return self.mean_u_coeffs @ _basis_values(x)
        vals = [self.objectives[i].expected_value(x) for i in self.reliable]
        return sum(vals) / len(self.reliable)

    def grad(self, x):
        if self.mean_u_coeffs is not None:
            return self.mean_u_coeffs @ _basis_cores(x)
        grads = [self.objectives[i].expected_gradient(x) for i in self.reliable]
        return sum(grads) / len(self.reliable)

    def gap(self, x) -> float:
        """f(x) - f_star, guarded against a broken optimum value."""
        g = float(self.f(x)) - self.f_star
        if g < -1e-9 * max(1.0, abs(self.f_star)):
            raise BrokenOptimumError(
                f"f({x!r}) = {g + self.f_star} is below the recorded optimum "
                f"{self.f_star}; the optimum oracle or an override is wrong"
            )
        return g if g > 0.0 else 0.0

    def agent_cores(self, x_per_agent: np.ndarray) -> np.ndarray:
        """Expected gradient of each agent's objective at that agent's point.

        Scalar problems only; the engine multiplies by the u draws.
        """
        if self.u_coeffs is not None:
            return np.einsum("ab,ba->a", self.u_coeffs, _basis_cores(x_per_agent))
        return np.array(
            [obj.expected_gradient(x) for obj, x in zip(self.objectives, x_per_agent)]
        )

    def agent_values(self, x_per_agent: np.ndarray) -> np.ndarray:
        if self.u_coeffs is not None:
            return np.einsum("ab,ba->a", self.u_coeffs, _basis_values(x_per_agent))
        return np.array(
            [obj.expected_value(x) for obj, x in zip(self.objectives, x_per_agent)]
        )


def _assign_families(n_agents: int, family_of: Sequence[int] | None) -> list:
    if family_of is not None:
        if len(family_of) != n_agents:
            raise ConfigError("family assignment length must equal n_agents")
        return [int(f) for f in family_of]
    if n_agents % N_FAMILIES != 0:
        raise ConfigError(
            "default benchmark assignment needs n_agents divisible by "
            f"{N_FAMILIES}; pass family_of for other sizes"
        )
    block = n_agents // N_FAMILIES
    return [i // block + 1 for i in range(n_agents)]


def benchmark_problem(
    byzantine: Iterable[int] = (),
    n_agents: int = 100,
    *,
    u_std: float = 0.1,
    v_std: float = 0.1,
    batch: int = 1,
    family_of: Sequence[int] | None = None,
    f_star: float | None = None,
    pl_constant: float | None = None,
    smoothness: float | None = None,
    sigma_sq: float | None = None,
    zeta_sq: float | None = None,
) -> GlobalProblem:
    """Standard 100-agent scalar benchmark, ten agents per family.

    The global objective averages the reliable agents only, so the optimum
    moves when Byzantine agents knock families out of the sum; it is always
    recomputed by the grid-plus-refine oracle unless overridden. Landscape
    constants default to numerical estimates: the gradient-domination
    constant from a probe grid, smoothness from finite differences, and
    (sigma_sq, zeta_sq) from the closed-form variance of the u-scaled
    gradient at the standard probe points {-2,-1,0,1,2}.

    `batch` averages that many independent (u, v) draws per stochastic
    gradient. The draws enter linearly, so this is implemented exactly as
    dividing both stds by sqrt(batch); the stored u_std/v_std and the
    default sigma_sq are the effective per-gradient values.
    """
    batch = int(batch)
    if batch < 1:
        raise ConfigError(f"batch must be a positive draw count, got {batch}")
    u_std = float(u_std) / math.sqrt(batch)
    v_std = float(v_std) / math.sqrt(batch)
    byz = frozenset(int(b) for b in byzantine)
    for b in byz:
        if not 0 <= b < n_agents:
            raise ConfigError(f"Byzantine id {b} outside 0..{n_agents - 1}")
    families = _assign_families(n_agents, family_of)
    objectives = tuple(
        family_objective(i, families[i], u_std, v_std) for i in range(n_agents)
    )
    reliable = tuple(i for i in range(n_agents) if i not in byz)
    if not reliable:
        raise ConfigError("every agent is Byzantine; nothing to optimize")

    u_coeffs = _U_COEFFS[[f - 1 for f in families]]
    mean_u = u_coeffs[list(reliable)].mean(axis=0)

    def f_vec(x):
        return mean_u @ _basis_values(x)

    def g_vec(x):
        return mean_u @ _basis_cores(x)

    if f_star is None:
        x_star, f_star_val = minimize_scalar_grid(f_vec)
    else:
        x_star, f_star_val = None, float(f_star)

    if smoothness is None:
        smoothness = _fd_smoothness(
            lambda x: (u_coeffs @ _basis_cores(x))[list(reliable)]
        )
    if pl_constant is None:
        pl_constant = _pl_probe_scalar(f_vec, g_vec, f_star_val)
    if sigma_sq is None or zeta_sq is None:
        probes = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        cores = u_coeffs[list(reliable)] @ _basis_cores(probes)  # (R, 5)
        if sigma_sq is None:
            # deviation is (u - 1) * core, so the variance is exact
            sigma_sq = float(u_std**2 * np.max(cores**2))
        if zeta_sq is None:
            zeta_sq = float(np.max((cores - cores.mean(axis=0)) ** 2))

    return GlobalProblem(
        objectives=objectives,
        reliable=reliable,
        dim=1,
        f_star=f_star_val,
        x_star=x_star,
        pl_constant=float(pl_constant),
        smoothness=float(smoothness),
        sigma_sq=float(sigma_sq),
        zeta_sq=float(zeta_sq),
        u_std=u_std,
        v_std=v_std,
        u_coeffs=u_coeffs,
        mean_u_coeffs=mean_u,
    )


def custom_problem(
    objectives: Sequence[LocalObjective],
    byzantine: Iterable[int] = (),
    *,
    dim: int = 1,
    f_star: float | None = None,
    pl_constant: float | None = None,
    smoothness: float | None = None,
    sigma_sq: float = 0.0,
    zeta_sq: float = 0.0,
    u_std: float = 0.0,
    v_std: float = 0.0,
) -> GlobalProblem:
    """Wrap user objectives, filling scalar-problem constants numerically.

    Multi-dimensional problems must supply f_star, pl_constant, and
    smoothness explicitly; only the scalar oracle is built in.
    """
    byz = frozenset(int(b) for b in byzantine)
    reliable = tuple(i for i in range(len(objectives)) if i not in byz)
    if not reliable:
        raise ConfigError("every agent is Byzantine; nothing to optimize")

    if dim == 1:

        def f_vec(x):
            xs = np.asarray(x, dtype=float)
            out = np.zeros_like(xs)
            for i in reliable:
                out = out + np.asarray(objectives[i].expected_value(xs), dtype=float)
            return out / len(reliable)

        def g_vec(x):
            xs = np.asarray(x, dtype=float)
            out = np.zeros_like(xs)
            for i in reliable:
                out = out + np.asarray(objectives[i].expected_gradient(xs), dtype=float)
            return out / len(reliable)

        x_star = None
        if f_star is None:
            x_star, f_star = minimize_scalar_grid(f_vec)
        if smoothness is None:
            smoothness = _fd_smoothness(
                lambda x: np.stack(
                    [np.asarray(objectives[i].expected_gradient(x)) for i in reliable]
                )
            )
        if pl_constant is None:
            pl_constant = _pl_probe_scalar(f_vec, g_vec, float(f_star))
    else:
        x_star = None
        if f_star is None or pl_constant is None or smoothness is None:
            raise ConfigError(
                "multi-dimensional problems need explicit f_star, "
                "pl_constant, and smoothness"
            )

    return GlobalProblem(
        objectives=tuple(objectives),
        reliable=reliable,
        dim=dim,
        f_star=float(f_star),
        x_star=x_star,
        pl_constant=float(pl_constant),
        smoothness=float(smoothness),
        sigma_sq=float(sigma_sq),
        zeta_sq=float(zeta_sq),
        u_std=u_std,
        v_std=v_std,
    )


_PL_GRID = np.arange(-5.0, 5.0 + 1e-9, 0.01)


def _pl_probe_scalar(f_vec, g_vec, f_star: float, grid: np.ndarray = _PL_GRID) -> float:
    gaps = f_vec(grid) - f_star
    if np.min(gaps) < -1e-9 * max(1.0, abs(f_star)):
        raise BrokenOptimumError("probe point below the recorded optimum")
    keep = gaps > 1e-9  # drop near-optimal points, the ratio there is 0/0
    if not keep.any():
        raise ConfigError("probe grid is entirely at the optimum")
    ratios = 0.5 * g_vec(grid[keep]) ** 2 / gaps[keep]
    return float(np.min(ratios))


def _fd_smoothness(core_batch, grid=None, h: float = 1e-5) -> float:
    """Max curvature over a grid via central differences of the gradient."""
    if grid is None:
        grid = np.arange(-5.0, 5.0 + 1e-9, 0.01)
    hi = np.asarray(core_batch(grid + h), dtype=float)
    lo = np.asarray(core_batch(grid - h), dtype=float)
    return float(np.max(np.abs(hi - lo)) / (2.0 * h))


def pl_constant_probe(prob: GlobalProblem, grid) -> float:
    """Smallest gradient-domination ratio over the probe grid.

    Returns inf over the grid of 0.5 * ||grad f||^2 / (f - f_star), an
    upper estimate of the largest constant the inequality supports.
    Points at the optimum are skipped; points below it raise.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ConfigError("empty probe grid")
    if prob.dim == 1 and grid.ndim == 1:
        return _pl_probe_scalar(
            lambda x: np.asarray(prob.f(x), dtype=float),
            lambda x: np.asarray(prob.grad(x), dtype=float),
            prob.f_star,
            grid,
        )
    best = math.inf
    for x in grid:
        gap = float(prob.f(x)) - prob.f_star
        if gap < -1e-9 * max(1.0, abs(prob.f_star)):
            raise BrokenOptimumError("probe point below the recorded optimum")
        if gap <= 1e-9:
            continue
        g = np.asarray(prob.grad(x), dtype=float)
        best = min(best, 0.5 * float(g @ g) / gap)
    if not math.isfinite(best):
        raise ConfigError("probe grid is entirely at the optimum")
    return best


def estimate_smoothness(prob: GlobalProblem, grid=None) -> float:
    """Estimate the worst per-agent smoothness constant on a scalar grid."""
    if prob.dim != 1:
        raise ConfigError("smoothness estimation is scalar-only")
    rel = list(prob.reliable)
    if prob.u_coeffs is not None:
        coeffs = prob.u_coeffs[rel]
        return _fd_smoothness(lambda x: coeffs @ _basis_cores(x), grid)
    return _fd_smoothness(
        lambda x: np.stack(
            [np.asarray(prob.objectives[i].expected_gradient(x)) for i in rel]
        ),
        grid,
    )


def estimate_sigma_zeta(
    prob: GlobalProblem,
    probe_points,
    samples_per_point: int,
    rng: np.random.Generator,
):
    """Monte-Carlo gradient variance and exact heterogeneity at the probes.

    sigma: worst over (probe, reliable agent) of the mean squared deviation
    of sampled gradients from the expected gradient. zeta: worst over probes
    of the farthest agent gradient from the reliable average, computed from
    expected gradients directly.
    """
    probes = list(probe_points)
    if not probes:
        raise ConfigError("empty probe list")
    if samples_per_point < 2:
        raise ConfigError("need at least two samples per probe")

    rel = list(prob.reliable)
    sigma_hat = 0.0
    zeta_hat = 0.0
    for x in probes:
        expected = np.array(
            [np.asarray(prob.objectives[i].expected_gradient(x)) for i in rel]
        ).reshape(len(rel), -1)
        dev = expected - expected.mean(axis=0)
        zeta_hat = max(zeta_hat, float(np.max(np.sum(dev**2, axis=1))))
        for row, i in enumerate(rel):
            obj = prob.objectives[i]
            draws = np.array(
                [np.asarray(obj.sample_gradient(x, rng)) for _ in range(samples_per_point)]
            ).reshape(samples_per_point, -1)
            diff = draws - expected[row]
            sigma_hat = max(sigma_hat, float(np.mean(np.sum(diff**2, axis=1))))
    return sigma_hat, zeta_hat
