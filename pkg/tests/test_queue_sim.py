import numpy as np
import pytest
from scipy import stats

from models.distributions import SeedSpec, ServiceModel, sample_exponential, sample_pareto
from models.queue_sim import (
    free_process,
    generate_arrivals,
    net_input,
    run_fcfs,
    scaled_free_path,
    sample_renewal_fluctuation,
    simulate_queue,
)
from models.run_spec import RunSpec
from models.scaling import rescale, scaling_constants
from tests.helpers import ks_tolerance
from utils.paths import reflect, regulator
from utils.stats import ks_against_cdf


@pytest.fixture
def hand_run():
    # arrivals at 1, 1.5, 4 with services 2, 0.5, 1 and an empty start
    return run_fcfs([1.0, 1.5, 4.0], [2.0, 0.5, 1.0], [], horizon=10.0, mean_service=1.0)


def test_generate_arrivals_single_customer_is_one_exponential():
    first = generate_arrivals(1, 2.0, np.random.default_rng(5))
    direct = sample_exponential(2.0, np.random.default_rng(5), size=1)
    np.testing.assert_allclose(first, direct)


def test_generate_arrivals_shape_and_errors(rng):
    times = generate_arrivals(500, 1.0, rng)
    assert times.size == 500
    assert np.all(np.diff(times) > 0)
    with pytest.raises(ValueError):
        generate_arrivals(0, 1.0, rng)


def test_first_arrival_is_minimum_of_exponentials(rng):
    firsts = np.array([generate_arrivals(100, 1.0, rng)[0] for _ in range(5000)])
    assert ks_against_cdf(firsts, stats.expon(scale=0.01).cdf) < ks_tolerance(firsts.size)


def test_last_arrival_mean_is_harmonic_number(rng):
    lasts = np.array([generate_arrivals(100, 1.0, rng)[-1] for _ in range(20_000)])
    harmonic = np.sum(1.0 / np.arange(1, 101))
    assert lasts.mean() == pytest.approx(harmonic, abs=0.05)


@pytest.mark.slow
def test_order_statistics_at_acceptance_scale(rng):
    draws = [generate_arrivals(100, 1.0, rng) for _ in range(100_000)]
    firsts = np.array([d[0] for d in draws])
    lasts = np.array([d[-1] for d in draws])
    assert ks_against_cdf(firsts, stats.expon(scale=0.01).cdf) < 0.01
    assert lasts.mean() == pytest.approx(5.187, abs=0.05)


def test_hand_computed_fcfs_trace(hand_run):
    run = hand_run
    np.testing.assert_allclose(run.Q.times, [1.0, 1.5, 3.0, 3.5, 4.0, 5.0])
    np.testing.assert_array_equal(run.Q.values, [1, 2, 1, 0, 1, 0])
    np.testing.assert_allclose(run.B.values, [0.0, 0.5, 2.0, 2.5, 2.5, 3.5])
    np.testing.assert_allclose(run.I.values, [1.0, 1.0, 1.0, 1.0, 1.5, 1.5])
    np.testing.assert_array_equal(run.A.values, [1, 2, 2, 2, 3, 3])
    np.testing.assert_array_equal(run.D.values, [0, 0, 1, 2, 2, 3])
    assert run.busy_time(10.0) == pytest.approx(3.5)
    assert run.idle_time(10.0) == pytest.approx(6.5)


def test_hand_computed_free_process(hand_run):
    n = hand_run.N
    assert n.initial_value == 0.0
    np.testing.assert_allclose(n.at(hand_run.Q.times), [0.0, 1.0, 0.0, -1.0, -0.5, -1.5])
    assert n.at(np.nextafter(1.0, 0.0)) == -1.0
    assert n.at(np.nextafter(4.0, 0.0)) == -1.5
    assert n.at(10.0) == pytest.approx(-6.5)
    np.testing.assert_allclose(reflect(n).at(hand_run.Q.times), hand_run.Q.values)


def test_hand_computed_net_input(hand_run):
    x = hand_run.X
    assert x.initial_value == 0.0
    expected = {1.0: 1.0, 1.5: 1.0, 3.0: -0.5, 3.5: -1.0, 4.0: -0.5, 5.0: -1.5, 10.0: -6.5}
    for t, value in expected.items():
        assert x.at(t) == pytest.approx(value)
    assert x.at(np.nextafter(1.0, 0.0)) == pytest.approx(-1.0)
    assert x.at(np.nextafter(1.5, 0.0)) == pytest.approx(0.5)
    np.testing.assert_allclose(regulator(x).at(hand_run.Q.times), hand_run.I.values)


def test_empty_start_idles_until_first_arrival():
    run = run_fcfs([2.0, 3.0], [1.0, 1.0], [], horizon=10.0, mean_service=1.0)
    assert run.Q.at(1.0) == 0.0
    assert run.idle_time(1.5) == pytest.approx(1.5)
    assert run.busy_time(1.5) == 0.0
    assert run.X.at(np.nextafter(2.0, 0.0)) == pytest.approx(-2.0)


def test_single_backlog_customer_outlasting_the_horizon():
    run = run_fcfs([20.0], [3.0], [100.0], horizon=10.0, mean_service=1.0)
    assert run.event_count == 0
    assert run.Q.at(5.0) == 1.0
    assert run.Q.at(10.0) == 1.0
    assert run.busy_time(5.0) == 5.0
    assert run.idle_time(5.0) == 0.0


def test_free_process_equals_queue_without_idle_time():
    run = run_fcfs([1.0, 2.0], [1.0, 1.0], [5.0, 5.0], horizon=8.0, mean_service=2.0)
    np.testing.assert_array_equal(run.N.times, run.Q.times)
    np.testing.assert_allclose(run.N.values, run.Q.values)


def test_free_process_of_an_empty_queue_drifts_down():
    run = run_fcfs([20.0], [1.0], [], horizon=10.0, mean_service=2.0)
    n = free_process(run, 2.0)
    assert n.initial_value == 0.0
    assert n.at(10.0) == pytest.approx(-5.0)
    refined = free_process(run, 2.0, refine_dt=1.0)
    np.testing.assert_allclose(refined.at(np.arange(1.0, 10.0)), -np.arange(1.0, 10.0) / 2.0)


def test_run_fcfs_rejects_bad_input():
    with pytest.raises(ValueError):
        run_fcfs([1.0], [1.0], [], horizon=0.0, mean_service=1.0)
    with pytest.raises(ValueError):
        run_fcfs([1.0, 2.0], [1.0], [], horizon=5.0, mean_service=1.0)


def random_spec(rng):
    return RunSpec(
        n=int(rng.integers(1, 1001)),
        alpha=float(rng.choice([1.2, 1.5, 1.8, 2.0])),
        q0=float(rng.uniform(0.0, 2.0)),
        T=float(rng.uniform(0.2, 3.0)),
    )


def check_reflection_identity(run):
    times = run.Q.times
    phi = reflect(run.N).at(times)
    idle = run.I.values
    assert np.array_equal(np.rint(phi), run.Q.values)
    assert np.all(np.abs(phi - run.Q.values) <= 1e-9 * (1.0 + idle / run.mean_service))


def test_reflection_identity_on_random_runs(rng):
    for _ in range(200):
        spec = random_spec(rng)
        check_reflection_identity(simulate_queue(spec, rng))


@pytest.mark.slow
def test_reflection_identity_on_many_random_runs(rng):
    for _ in range(1000):
        spec = random_spec(rng)
        check_reflection_identity(simulate_queue(spec, rng))


def test_work_conservation_and_departure_bound(rng):
    for _ in range(100):
        run = simulate_queue(random_spec(rng), rng)
        if run.event_count == 0:
            continue
        np.testing.assert_allclose(run.B.values + run.I.values, run.Q.times, rtol=1e-12, atol=1e-9)
        assert np.all(run.Q.values >= 0)
        assert np.all(run.D.values <= run.A.values + run.backlog)
        held = np.concatenate(([run.backlog], run.Q.values[:-1]))
        gaps = np.diff(run.I.all_values())
        # idle time only grows while the queue is empty
        assert np.all(np.abs(gaps[held > 0]) <= 1e-9 * (1.0 + run.horizon))


def test_net_input_regulator_equals_idle_time(rng):
    for _ in range(100):
        run = simulate_queue(random_spec(rng), rng)
        if run.event_count == 0:
            continue
        np.testing.assert_allclose(regulator(net_input(run)).at(run.Q.times), run.I.values,
                                   rtol=1e-9, atol=1e-9)


def test_queue_is_monotone_in_the_backlog(rng):
    model = ServiceModel(1.5, 1.0)
    for _ in range(50):
        arrivals = generate_arrivals(200, model.lam / 200, rng)
        services = sample_pareto(model, rng, size=200)
        backlog = sample_pareto(model, rng, size=5)
        horizon = float(arrivals[-1])
        small = run_fcfs(arrivals, services, backlog[:3], horizon, model.mean)
        large = run_fcfs(arrivals, services, backlog, horizon, model.mean)
        grid = np.union1d(small.Q.times, large.Q.times)
        assert np.all(large.Q.at(grid) >= small.Q.at(grid))


def test_simulate_queue_uses_the_spec_scaling():
    spec = RunSpec(n=10_000, alpha=1.5, q0=1.0, T=1.0)
    run = simulate_queue(spec, SeedSpec(7).generator())
    assert run.backlog == 100
    assert run.horizon == pytest.approx(1000.0)
    assert run.services.size == run.backlog + run.arrival_times.size
    assert run.arrival_times.size <= spec.n
    again = simulate_queue(spec, SeedSpec(7).generator())
    np.testing.assert_array_equal(run.Q.times, again.Q.times)


def test_renewal_fluctuation_is_finite_and_centered(rng):
    model = ServiceModel(1.5, 1.0)
    constants = scaling_constants(10_000, 1.5)
    values = np.array([sample_renewal_fluctuation(model, constants, 1.0, rng)
                       for _ in range(500)])
    assert np.all(np.isfinite(values))
    assert abs(np.median(values)) < 1.0


def test_scaled_free_path_follows_the_idle_drift():
    spec = RunSpec(n=200, alpha=1.5, q0=0.2, T=2.0, grid=201)
    step = spec.dt * spec.constants.time_factor
    free = scaled_free_path(spec, SeedSpec(5).generator())
    fine = spec.model_copy(update={"refine_dt": step / 50})
    exact = rescale(simulate_queue(fine, SeedSpec(5).generator()).N, spec.constants, spec.T,
                    spec.grid)
    # both lag the continuous drift by at most their own sampling step
    tolerance = 1.05 * step * spec.constants.space_factor / spec.service_model.mean
    assert np.max(np.abs(free.values - exact.values)) <= tolerance
    np.testing.assert_allclose(regulator(free).values, regulator(exact).values, atol=tolerance)
