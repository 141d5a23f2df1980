"""
Exact event-driven simulation of the transitory single-server queue.

A finite pool of ``n`` customers arrives at the order statistics of
i.i.d. exponential clocks, on top of an initial backlog. Customers are
served first come first served by one server with Pareto service times.
Departure times follow the Lindley recursion

    c_j = max(a_j, c_{j-1}) + S_j

with a_j the arrival time (zero for the backlog). A busy period that
starts at an arrival restarts the recursion from that arrival time
exactly. Every process is recorded as a StepPath on the event times.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import accumulate

import numpy as np

from models.distributions import sample_exponential, sample_pareto
from models.scaling import rescale
from utils.paths import StepPath

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QueueRun:
    """One simulated replication on [0, horizon] in unscaled time.

    Attributes:
        arrival_times: Arrival times of the pool customers up to the horizon.
        services: Service durations in service order, backlog first.
        backlog: Initial queue length N(0).
        horizon: End of the observation window.
        mean_service: E[S], used by the free process.
        A: Arrival counting process.
        D: Departure counting process sigma(B(t)).
        Q: Queue length, including the customer in service.
        B: Cumulative busy time, sampled at event times.
        I: Cumulative idle time, sampled at event times.
        refine_dt: Optional sampling step for the free process during idle periods.
    """

    arrival_times: np.ndarray
    services: np.ndarray
    backlog: int
    horizon: float
    mean_service: float
    A: StepPath
    D: StepPath
    Q: StepPath
    B: StepPath
    I: StepPath
    refine_dt: float = None

    @property
    def event_times(self):
        return self.Q.times

    @property
    def event_count(self):
        return self.Q.times.size

    def busy_time(self, t):
        """Exact cumulative busy time at time(s) ``t``."""
        return self._integrate_state(t, busy=True)

    def idle_time(self, t):
        """Exact cumulative idle time at time(s) ``t``."""
        return self._integrate_state(t, busy=False)

    def _integrate_state(self, t, busy):
        t = np.asarray(t, dtype=float)
        base = self.B if busy else self.I
        idx = np.searchsorted(self.Q.times, t, side="right") - 1
        starts = np.concatenate(([0.0], self.Q.times))[idx + 1]
        accumulated = base.all_values()[idx + 1]
        is_busy = self.Q.all_values()[idx + 1] > 0
        active = is_busy if busy else ~is_busy
        result = accumulated + np.where(active, t - starts, 0.0)
        return float(result) if result.ndim == 0 else result

    @cached_property
    def N(self):
        return free_process(self, self.mean_service, self.refine_dt)

    @cached_property
    def X(self):
        return net_input(self)


def generate_arrivals(n, rate, rng):
    """Sorted arrival times of ``n`` customers with i.i.d. Exp(rate) clocks.

    Uses the spacing representation of exponential order statistics,
    E_(j) = sum_{s <= j} E_s / (n - s + 1), so no sort is needed.
    """
    if n < 1:
        raise ValueError(f"population size n must be at least 1, got {n}")
    spacings = sample_exponential(1.0, rng, size=n) / np.arange(n, 0, -1)
    return np.cumsum(spacings) / rate


def _last_at_each_time(times):
    """Mask of the last entry at each distinct time of a sorted event list."""
    last = np.ones(times.size, dtype=bool)
    last[:-1] = times[1:] != times[:-1]
    return last


def run_fcfs(arrivals, arrival_services, backlog_services, horizon, mean_service,
             refine_dt=None):
    """FCFS dynamics for given arrivals and service times.

    Args:
        arrivals: Sorted arrival times; those after ``horizon`` are ignored.
        arrival_services: Service time of each arriving customer, in
            arrival order. Needs at least as many entries as arrivals
            up to the horizon.
        backlog_services: Service times of the customers present at time 0.
        horizon: Observation window end, unscaled.
        mean_service: E[S] for the free process.
        refine_dt: Optional idle-period sampling step for the free process.

    Returns:
        QueueRun
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    arrivals = np.asarray(arrivals, dtype=float)
    backlog_services = np.asarray(backlog_services, dtype=float)
    arrival_services = np.asarray(arrival_services, dtype=float)
    if np.any(np.diff(arrivals) <= 0):
        raise ValueError("arrival times must be strictly increasing")

    arrived = arrivals[arrivals <= horizon]
    if arrival_services.size < arrived.size:
        raise ValueError("fewer service times than arrivals within the horizon")
    backlog = backlog_services.size
    services = np.concatenate((backlog_services, arrival_services[: arrived.size]))

    customer_arrivals = np.concatenate((np.zeros(backlog), arrived))
    completions = np.fromiter(
        accumulate(zip(customer_arrivals.tolist(), services.tolist()),
                   lambda done, customer: max(customer[0], done) + customer[1],
                   initial=0.0),
        dtype=float, count=services.size + 1,
    )[1:]
    departures = completions[completions <= horizon]

    # arrivals sort before departures at equal times
    times = np.concatenate((arrived, departures))
    steps = np.concatenate((np.ones(arrived.size), -np.ones(departures.size)))
    order = np.lexsort((-steps, times))
    times, steps = times[order], steps[order]
    queue = backlog + np.cumsum(steps)
    arrived_count = np.cumsum(steps > 0)
    departed_count = np.cumsum(steps < 0)
    last = _last_at_each_time(times)
    times, queue = times[last], queue[last]
    arrived_count, departed_count = arrived_count[last], departed_count[last]

    # queue level in force on each inter-event interval
    held = np.concatenate(([backlog], queue[:-1]))
    gaps = np.diff(np.concatenate(([0.0], times)))
    busy = np.cumsum(np.where(held > 0, gaps, 0.0))
    idle = times - busy

    logger.debug("fcfs run: backlog=%d arrivals=%d departures=%d horizon=%.6g",
                 backlog, arrived.size, departures.size, horizon)
    return QueueRun(
        arrival_times=arrived,
        services=services,
        backlog=backlog,
        horizon=float(horizon),
        mean_service=float(mean_service),
        A=StepPath(times, arrived_count, 0.0, horizon),
        D=StepPath(times, departed_count, 0.0, horizon),
        Q=StepPath(times, queue, backlog, horizon),
        B=StepPath(times, busy, 0.0, horizon),
        I=StepPath(times, idle, 0.0, horizon),
        refine_dt=refine_dt,
    )


def simulate_queue(spec, rng):
    """Simulate one replication of the queue described by a RunSpec.

    Per-customer clocks run at rate lam / n so the initial aggregate
    arrival rate equals lam = 1 / E[S]. The horizon is T * tau_n(1) and
    the backlog is ceil(q0 * n^(1/(2 alpha - 1)) / ell2).
    """
    model = spec.service_model
    constants = spec.constants
    horizon = constants.tau(spec.T)
    backlog = constants.backlog(spec.q0)

    arrivals = generate_arrivals(spec.n, model.lam / spec.n, rng)
    backlog_services = sample_pareto(model, rng, size=backlog)
    within = int(np.searchsorted(arrivals, horizon, side="right"))
    arrival_services = sample_pareto(model, rng, size=within)
    return run_fcfs(arrivals, arrival_services, backlog_services, horizon,
                    model.mean, refine_dt=spec.refine_dt)


def scaled_free_path(spec, rng):
    """Simulate a replication and rescale its free process onto the spec grid.

    Idle periods are sampled every unscaled grid step unless the spec
    sets ``refine_dt``, so the grid running minimum follows the idle
    drift to within one grid step.
    """
    constants = spec.constants
    refine = spec.refine_dt or spec.dt * constants.time_factor
    run = simulate_queue(spec.model_copy(update={"refine_dt": refine}), rng)
    return rescale(run.N, constants, spec.T, spec.grid)


def _idle_intervals(run):
    """Start, end, cumulative idle at start, and whether the end is an event."""
    times = run.Q.times
    held = np.concatenate(([run.backlog], run.Q.values))
    starts = np.concatenate(([0.0], times))
    ends = np.concatenate((times, [run.horizon]))
    idle_at_start = run.I.all_values()
    at_event = np.ones(starts.size, dtype=bool)
    at_event[-1] = False
    mask = (held == 0) & (ends > starts)
    return starts[mask], ends[mask], idle_at_start[mask], at_event[mask]


def free_process(run, mean_service, refine_dt=None):
    """Free process N(t) = Q(t) - I(t) / E[S] as a StepPath.

    Besides the event times, the path is sampled one ulp before each
    arrival that ends an idle period (so the running infimum sees the
    bottom of the linear decrease), at the horizon, and every
    ``refine_dt`` inside idle periods.
    """
    if not mean_service > 0:
        raise ValueError("mean service time must be positive")
    times = [run.Q.times]
    values = [run.Q.values - run.I.values / mean_service]

    starts, ends, idle_start, at_event = _idle_intervals(run)
    idle_end = idle_start + (ends - starts)
    before = np.nextafter(ends[at_event], -np.inf)
    keep = before > starts[at_event]
    times.append(before[keep])
    values.append(-idle_end[at_event][keep] / mean_service)
    if starts.size and not at_event[-1]:
        times.append(np.array([run.horizon]))
        values.append(np.array([-idle_end[-1] / mean_service]))

    if refine_dt:
        for start, end, base in zip(starts, ends, idle_start):
            grid = start + refine_dt * np.arange(1, int(np.ceil((end - start) / refine_dt)))
            grid = grid[grid < np.nextafter(end, -np.inf)]
            times.append(grid)
            values.append(-(base + (grid - start)) / mean_service)

    times = np.concatenate(times)
    values = np.concatenate(values)
    order = np.argsort(times, kind="stable")
    initial = float(run.backlog)
    return StepPath(times[order], values[order], initial, run.horizon)


def net_input(run):
    """Net input X(t) = (work arrived by t, backlog included) - t.

    Sampled at event times, one ulp before each arrival and at the
    horizon; X decreases with slope -1 between those points.
    """
    work = np.concatenate(([0.0], np.cumsum(run.services)))
    arrived = run.A.values.astype(int)
    times = [run.Q.times]
    values = [work[run.backlog + arrived] - run.Q.times]

    jumps = np.flatnonzero(np.diff(np.concatenate(([0], arrived))) > 0)
    jump_times = run.Q.times[jumps]
    before = np.nextafter(jump_times, -np.inf)
    previous = np.concatenate(([0.0], run.Q.times))[jumps]
    keep = before > previous
    times.append(before[keep])
    values.append(work[run.backlog + arrived[jumps][keep] - 1] - before[keep])

    last = run.Q.times[-1] if run.Q.times.size else 0.0
    if run.horizon > last:
        times.append(np.array([run.horizon]))
        total = work[run.backlog + (arrived[-1] if arrived.size else 0)]
        values.append(np.array([total - run.horizon]))

    times = np.concatenate(times)
    values = np.concatenate(values)
    order = np.argsort(times, kind="stable")
    return StepPath(times[order], values[order], work[run.backlog], run.horizon)


def sample_renewal_fluctuation(model, constants, t, rng):
    """Scaled renewal fluctuation s_n (tau_n(t) / E[S] - sigma(tau_n(t))).

    sigma counts the renewals of the service process by time tau_n(t).
    Converges to a spectrally positive stable variable as n grows.
    """
    horizon = constants.tau(t)
    expected = horizon / model.mean
    chunk = max(16, int(expected * 1.1) + 16)
    total, count = 0.0, 0
    while True:
        partial = total + np.cumsum(sample_pareto(model, rng, size=chunk))
        done = int(np.searchsorted(partial, horizon, side="right"))
        count += done
        if done < chunk:
            break
        total = partial[-1]
    return constants.space_factor * (expected - count)
