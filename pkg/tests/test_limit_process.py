import math

import numpy as np
import pytest
from scipy import stats

from models.distributions import SeedSpec, ServiceModel, stable_domain_scale
from models.limit_process import (
    LimitSpec,
    busy_period,
    matched_stable_scale,
    s_alpha,
    simulate_limit_free,
    simulate_limit_paths,
    simulate_limit_reflected,
)
from models.scaling import scaling_constants
from tests.helpers import ks_tolerance
from utils.paths import reflect
from utils.stats import ks_against_cdf, ks_two_sample


def test_s_alpha_values():
    assert s_alpha(1.0, 1.5) == 1.0
    assert s_alpha(1.0, 1.9) == 1.0
    assert s_alpha(2.0, 1.5) == pytest.approx(0.314980, abs=1e-6)
    assert s_alpha(4.0, 2.0) == pytest.approx(4.0 ** -1.5)
    with pytest.raises(ValueError):
        s_alpha(0.0, 1.5)


def test_limit_spec_validation():
    with pytest.raises(ValueError):
        LimitSpec(1.5, 1.0, 1.0, 1.0, T=1.0, dt=0.3)
    with pytest.raises(ValueError):
        LimitSpec(1.5, -1.0, 1.0, 1.0, T=1.0, dt=0.1)
    with pytest.raises(ValueError):
        LimitSpec(2.5, 1.0, 1.0, 1.0, T=1.0, dt=0.1)
    spec = LimitSpec.from_service_model(ServiceModel(1.5, 1.0), 0.5, 1.0, 0.01)
    assert spec.lam == pytest.approx(1.0 / 3.0)
    assert spec.s_alpha == pytest.approx(3.0 ** (-5.0 / 3.0))
    assert spec.steps == 100


def test_deterministic_parabola(rng):
    spec = LimitSpec(1.5, 1.0, math.sqrt(2.0), 0.0, T=2.0, dt=0.001)
    free = simulate_limit_free(spec, rng)
    np.testing.assert_allclose(free.values, 1.0 - free.times ** 2, atol=1e-12)
    assert busy_period(spec, rng) == pytest.approx(1.0, abs=spec.dt)


def test_free_path_starts_at_q0(rng):
    spec = LimitSpec(1.7, 0.37, 1.0, 1.0, T=1.0, dt=0.01)
    paths = simulate_limit_paths(spec, rng, paths=10)
    assert paths.shape == (10, 101)
    assert np.all(paths[:, 0] == 0.37)


def test_reflected_deterministic_cases(rng):
    flat = LimitSpec(1.5, 0.0, 1.0, 0.0, T=1.0, dt=0.01)
    assert np.all(simulate_limit_reflected(flat, rng).values == 0.0)

    spec = LimitSpec(1.5, 1.0, 1.0, 0.0, T=3.0, dt=0.01)
    reflected = simulate_limit_reflected(spec, rng)
    parabola = 1.0 - 0.5 * reflected.times ** 2
    np.testing.assert_allclose(reflected.values, np.maximum(parabola, 0.0), atol=1e-12)
    hit = math.sqrt(2.0)
    assert np.all(reflected.values[reflected.times > hit + spec.dt] == 0.0)


def test_reflected_path_is_reflection_of_free_path():
    spec = LimitSpec(1.5, 0.2, 1.0, 1.0, T=2.0, dt=0.01)
    free = simulate_limit_free(spec, SeedSpec(4).generator())
    reflected = simulate_limit_reflected(spec, SeedSpec(4).generator())
    np.testing.assert_array_equal(reflected.values, reflect(free).values)
    assert np.all(reflected.values >= 0)


def test_busy_period_is_zero_without_initial_mass(rng):
    spec = LimitSpec(1.5, 0.0, 1.0, 0.0, T=1.0, dt=0.01)
    assert busy_period(spec, rng) == 0.0


def test_busy_period_is_monotone_in_q0():
    for seed in range(50):
        hits = []
        for q0 in (0.1, 0.5, 1.0):
            spec = LimitSpec(1.5, q0, 1.0, 1.0, T=5.0, dt=0.01)
            hit = busy_period(spec, SeedSpec(seed).generator())
            hits.append(math.inf if hit is None else hit)
        assert hits == sorted(hits)


def test_gaussian_marginal_at_alpha_two(rng):
    spec = LimitSpec(2.0, 0.0, 1.0, 1.0, T=1.0, dt=0.01)
    final = simulate_limit_paths(spec, rng, paths=20_000)[:, -1]
    law = stats.norm(loc=-0.5, scale=math.sqrt(2.0))
    assert ks_against_cdf(final, law.cdf) < ks_tolerance(final.size)


def test_pure_stable_component_is_self_similar(rng):
    alpha = 1.5
    spec = LimitSpec(alpha, 0.0, 0.0, 1.0, T=4.0, dt=0.05)
    paths = simulate_limit_paths(spec, rng, paths=10_000)
    at_one = paths[:, round(1.0 / spec.dt)]
    at_four = paths[:, -1] / 4.0 ** (1.0 / alpha)
    assert ks_two_sample(at_one, at_four).statistic < ks_tolerance(10_000, 10_000)


def absorbed_fraction(T, paths=1000):
    spec = LimitSpec(1.5, 1.0, 1.0, 1.0, T=T, dt=0.01)
    free = simulate_limit_paths(spec, SeedSpec(8).generator(), paths=paths)
    running_min = np.minimum.accumulate(free, axis=1)
    reflected_end = free[:, -1] + np.maximum(0.0, -running_min[:, -1])
    return np.mean(reflected_end == 0.0)


def test_absorption_fraction_grows_with_the_horizon():
    assert absorbed_fraction(6.0) > absorbed_fraction(1.0)


def test_plotting_configuration_busy_periods_are_right_skewed():
    spec = LimitSpec(1.5, 0.1, 1.0, 1.0, T=20.0, dt=0.001)
    hits = np.array([busy_period(spec, SeedSpec(11, r).generator()) for r in range(500)],
                    dtype=float)
    assert not np.isnan(hits).any()
    assert hits.mean() > np.median(hits)


def test_matched_scale_uses_closed_form_below_two():
    model = ServiceModel(1.5, 1.0)
    scale = matched_stable_scale(model, scaling_constants(1000, 1.5))
    assert scale == pytest.approx(stable_domain_scale(model))


def test_matched_scale_is_measured_at_two():
    model = ServiceModel(2.0, 0.5)
    scale = matched_stable_scale(model, scaling_constants(1000, 2.0), reps=500)
    assert 0.0 < scale < 5.0
