"""Objective family, optimum oracle, and constant estimator tests."""

import math

import numpy as np
import pytest
import scipy.optimize

from gossipshield import (
    BrokenOptimumError,
    ConfigError,
    benchmark_problem,
    custom_problem,
    estimate_sigma_zeta,
    estimate_smoothness,
    family_objective,
    pl_constant_probe,
)
from gossipshield.objectives import LocalObjective, minimize_scalar_grid


def _quad(agent, a):
    # deterministic a*x^2 objective, dimension 1
    return LocalObjective(
        agent=agent,
        family="quad",
        expected_value=lambda x: a * np.asarray(x) ** 2,
        expected_gradient=lambda x: 2 * a * np.asarray(x),
        sample_value=lambda x, u, v: a * np.asarray(x) ** 2,
        sample_gradient=lambda x, rng: 2 * a * np.asarray(x),
    )


def test_benchmark_value_at_origin():
    p = benchmark_problem()
    assert float(p.f(0.0)) == pytest.approx(0.1, abs=1e-12)
    assert p.f_star == pytest.approx(0.1, abs=1e-9)
    assert abs(p.x_star) < 1e-6


def test_benchmark_sum_identity():
    p = benchmark_problem()
    xs = np.random.default_rng(1).uniform(-8.0, 8.0, 1000)
    total = sum(np.asarray(o.expected_value(xs)) for o in p.objectives)
    ref = 10.0 * xs**2 + 30.0 * np.sin(xs) ** 2 + 10.0
    assert np.abs(total - ref).max() < 1e-9


def test_even_byzantine_keeps_balanced_optimum():
    p = benchmark_problem(byzantine=range(0, 100, 10))
    assert len(p.reliable) == 90
    assert p.f_star == pytest.approx(0.1, abs=1e-9)
    assert p.gap(0.0) == pytest.approx(0.0, abs=1e-9)


def test_family_cores_at_origin():
    # expected gradients per family at x = 0
    expect = [0.0, 2.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0]
    got = [float(family_objective(0, f).expected_gradient(0.0)) for f in range(1, 11)]
    assert got == pytest.approx(expect, abs=1e-12)
    p = benchmark_problem(byzantine=range(0, 100, 10))
    cores = p.agent_cores(np.zeros(100))
    assert float(np.sum(cores[list(p.reliable)] ** 2)) == pytest.approx(54.0, abs=1e-9)


def test_expected_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-5
    for fam in range(1, 11):
        obj = family_objective(0, fam)
        for x in rng.uniform(-4.0, 4.0, 100):
            fd = (obj.expected_value(x + h) - obj.expected_value(x - h)) / (2 * h)
            assert float(obj.expected_gradient(x)) == pytest.approx(float(fd), abs=1e-6)


def test_sampled_gradient_matches_sampled_value_slope():
    rng = np.random.default_rng(11)
    h = 1e-5
    for fam in range(1, 11):
        obj = family_objective(0, fam)
        for _ in range(100):
            x = float(rng.uniform(-4.0, 4.0))
            u = float(rng.normal(1.0, 0.1))
            v = float(rng.normal(0.0, 0.1))
            fd = (obj.sample_value(x + h, u, v) - obj.sample_value(x - h, u, v)) / (2 * h)
            # the sampled gradient at the same u is u times the core
            core = float(obj.expected_gradient(x))
            assert u * core == pytest.approx(float(fd), abs=1e-6)


def test_sample_gradient_unbiased():
    rng = np.random.default_rng(3)
    for x in (-1.0, 0.5, 3.0):
        for fam in (2, 5, 8):
            obj = family_objective(0, fam)
            draws = np.array([float(obj.sample_gradient(x, rng)) for _ in range(20_000)])
            core = float(obj.expected_gradient(x))
            se = draws.std(ddof=1) / math.sqrt(len(draws))
            if se == 0.0:
                assert draws.mean() == core
            else:
                assert abs(draws.mean() - core) < 3.0 * se


def test_grid_oracle_against_scipy_refinement():
    p = benchmark_problem(byzantine=range(20))  # drop two whole families
    assert p.x_star is not None

    def f(x):
        return float(p.f(x))

    res = scipy.optimize.minimize_scalar(
        f, bracket=(p.x_star - 1e-3, p.x_star, p.x_star + 1e-3), options={"xtol": 1e-12}
    )
    assert p.f_star == pytest.approx(res.fun, abs=1e-10)
    # global property: no coarse grid point beats the oracle value
    xs = np.arange(-10.0, 10.0, 1e-3)
    assert float(np.min(p.f(xs))) >= p.f_star - 1e-9


def test_grid_oracle_simple_functions():
    # x resolution is limited by the value plateau (~sqrt(eps)); the value
    # itself is what downstream gap computations consume
    x, v = minimize_scalar_grid(lambda x: (x - 2.5) ** 2 + 1.0)
    assert x == pytest.approx(2.5, abs=1e-7)
    assert v == pytest.approx(1.0, abs=1e-12)
    # two basins, the deeper one off-center
    x, v = minimize_scalar_grid(lambda x: np.cos(3 * x) + 0.05 * x)
    assert v <= -1.0  # deeper than the central basin


def test_pl_probe_quadratics():
    half = custom_problem([_quad(0, 0.5)])
    assert half.f_star == pytest.approx(0.0, abs=1e-12)
    assert pl_constant_probe(half, np.linspace(-3, 3, 101)) == pytest.approx(1.0, rel=1e-6)
    ten = custom_problem([_quad(0, 10.0)])
    assert pl_constant_probe(ten, np.linspace(-3, 3, 101)) == pytest.approx(20.0, rel=1e-6)


def test_pl_probe_benchmark_positive():
    p = benchmark_problem()
    nu = pl_constant_probe(p, np.arange(-5.0, 5.0, 0.01))
    assert 0.0 < nu < 1.0
    assert p.pl_constant == pytest.approx(nu, rel=1e-9)


def test_pl_probe_errors():
    p = benchmark_problem()
    with pytest.raises(ConfigError):
        pl_constant_probe(p, [])
    # an optimum claimed above true values fails fast at build time
    with pytest.raises(BrokenOptimumError):
        benchmark_problem(f_star=0.2)
    broken = benchmark_problem(
        f_star=0.2, pl_constant=0.8, smoothness=4.0, sigma_sq=0.2, zeta_sq=16.0
    )
    with pytest.raises(BrokenOptimumError):
        pl_constant_probe(broken, [0.0, 1.0])
    with pytest.raises(BrokenOptimumError):
        broken.gap(0.0)


def test_gap_clamps_rounding_noise():
    p = benchmark_problem()
    assert p.gap(p.x_star) >= 0.0
    assert p.gap(1.0) == pytest.approx(float(p.f(1.0)) - 0.1, rel=1e-12)


def test_smoothness_estimates():
    quad = custom_problem([_quad(0, 3.0)])
    assert quad.smoothness == pytest.approx(6.0, rel=1e-5)
    p = benchmark_problem()
    assert 2.0 < p.smoothness < 6.0
    assert estimate_smoothness(p) == pytest.approx(p.smoothness, rel=1e-9)


def test_sigma_zeta_deterministic_and_identical():
    p = benchmark_problem(u_std=0.0, v_std=0.0, sigma_sq=None, zeta_sq=None)
    rng = np.random.default_rng(0)
    s, z = estimate_sigma_zeta(p, [-1.0, 0.0, 2.0], 50, rng)
    assert s == 0.0
    assert z > 0.0  # families still differ
    same = custom_problem([_quad(i, 2.0) for i in range(5)])
    s2, z2 = estimate_sigma_zeta(same, [-1.0, 1.0], 10, rng)
    assert s2 == 0.0
    assert z2 == 0.0


def test_sigma_zeta_benchmark_monte_carlo():
    p = benchmark_problem()
    rng = np.random.default_rng(42)
    s, z = estimate_sigma_zeta(p, [-2.0, -1.0, 0.0, 1.0, 2.0], 4000, rng)
    # builder stores the closed-form values at the same probes
    assert z == pytest.approx(p.zeta_sq, rel=1e-12)
    assert s == pytest.approx(p.sigma_sq, rel=0.2)
    assert 0.0 < s < 1.0


def test_builder_validation():
    with pytest.raises(ConfigError):
        benchmark_problem(n_agents=55)
    with pytest.raises(ConfigError):
        benchmark_problem(family_of=[1, 2])
    with pytest.raises(ConfigError):
        benchmark_problem(byzantine=[200])
    with pytest.raises(ConfigError):
        benchmark_problem(byzantine=range(10), n_agents=10)
    with pytest.raises(ConfigError):
        family_objective(0, 11)
    with pytest.raises(ConfigError):
        estimate_sigma_zeta(benchmark_problem(), [], 10, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        estimate_sigma_zeta(benchmark_problem(), [0.0], 1, np.random.default_rng(0))


def test_agent_cores_fast_path_matches_loop():
    p = benchmark_problem()
    xs = np.random.default_rng(9).uniform(-3, 3, 100)
    fast = p.agent_cores(xs)
    slow = np.array([p.objectives[i].expected_gradient(x) for i, x in enumerate(xs)])
    assert np.allclose(fast, slow, atol=1e-12)
    vals_fast = p.agent_values(xs)
    vals_slow = np.array([p.objectives[i].expected_value(x) for i, x in enumerate(xs)])
    assert np.allclose(vals_fast, vals_slow, atol=1e-12)


def test_custom_problem_requires_constants_beyond_dim_one():
    objs = [_quad(0, 1.0)]
    with pytest.raises(ConfigError):
        custom_problem(objs, dim=2)
    ok = custom_problem(objs, dim=2, f_star=0.0, pl_constant=2.0, smoothness=2.0)
    assert ok.dim == 2


def test_batch_is_exactly_a_std_rescale():
    # B averaged draws enter the gradient linearly
    batched = benchmark_problem(batch=4)
    rescaled = benchmark_problem(u_std=0.05, v_std=0.05)
    assert batched.u_std == rescaled.u_std == 0.05
    assert batched.v_std == rescaled.v_std == 0.05
    assert batched.sigma_sq == rescaled.sigma_sq
    assert batched.sigma_sq == benchmark_problem().sigma_sq / 4.0
    assert batched.zeta_sq == benchmark_problem().zeta_sq  # heterogeneity is deterministic
    assert batched.f_star == rescaled.f_star
    with pytest.raises(ConfigError):
        benchmark_problem(batch=0)
