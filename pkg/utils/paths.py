"""
Cadlag path algebra for prelimit and limit processes.

Two path kinds are supported:

- ``StepPath``: piecewise-constant, right-continuous path given by event
  times and the value immediately after each event. Every prelimit
  process (arrivals, queue length, free process, net input) is stored
  this way.
- ``GridPath``: values sampled on a uniform grid ``k * dt``, used for the
  simulated limit processes.

The reflection map ``reflect`` and the regulator ``regulator`` follow the
one-sided Skorokhod construction: the regulator is minus the running
infimum of the negative part, and the reflected path is the path plus its
regulator.
"""
import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

CSV_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True, eq=False)
class StepPath:
    """Right-continuous step path on [0, horizon].

    Attributes:
        times: Strictly increasing event times.
        values: Path value immediately after each event.
        initial_value: Value on [0, times[0]).
        horizon: End of the observation window. Defaults to the last
            event time (0 when there are no events).
    """

    times: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0
    horizon: float = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if times.size and times[0] < 0:
            raise ValueError("event times must be non-negative")
        if np.any(np.diff(times) <= 0):
            raise ValueError("event times must be strictly increasing")
        horizon = self.horizon
        if horizon is None:
            horizon = float(times[-1]) if times.size else 0.0
        elif times.size and horizon < times[-1]:
            raise ValueError("horizon precedes the last event time")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "initial_value", float(self.initial_value))
        object.__setattr__(self, "horizon", float(horizon))

    def __len__(self):
        return self.times.size

    def at(self, t):
        """Evaluate the path at time(s) ``t`` (right-continuous)."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        padded = np.concatenate(([self.initial_value], self.values))
        result = padded[np.asarray(idx) + 1]
        return float(result) if np.ndim(result) == 0 else result

    def all_values(self):
        """Initial value followed by the value after each event."""
        return np.concatenate(([self.initial_value], self.values))

    def with_values(self, initial_value, values):
        return StepPath(self.times, values, initial_value, self.horizon)

    def truncate(self, horizon):
        """Restriction of the path to [0, horizon]."""
        if horizon > self.horizon:
            raise ValueError("cannot truncate beyond the path horizon")
        keep = self.times <= horizon
        return StepPath(self.times[keep], self.values[keep], self.initial_value, horizon)


@dataclass(frozen=True, eq=False)
class GridPath:
    """Path sampled at ``k * dt`` for ``k = 0..K``."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("grid step dt must be positive")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("grid values must be a non-empty 1-D array")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @property
    def steps(self):
        return self.values.size - 1

    @property
    def horizon(self):
        return self.steps * self.dt

    @property
    def times(self):
        return np.arange(self.values.size) * self.dt

    def at(self, t):
        """Value at the last grid point not after ``t``."""
        # small tolerance so that t = k*dt computed elsewhere lands on k
        idx = np.floor(np.asarray(t, dtype=float) / self.dt + 1e-9).astype(int)
        result = self.values[np.clip(idx, 0, self.steps)]
        return float(result) if np.ndim(result) == 0 else result

    def with_values(self, values):
        return GridPath(self.dt, values)

    def truncate(self, horizon):
        steps = int(round(horizon / self.dt))
        if steps > self.steps:
            raise ValueError("cannot truncate beyond the path horizon")
        return GridPath(self.dt, self.values[: steps + 1])


@dataclass(frozen=True)
class Excursion:
    """Maximal interval on which the reflected path is strictly positive."""

    start: float
    end: float
    height: float

    @property
    def length(self):
        return self.end - self.start


def _running_regulator(values):
    return np.maximum(0.0, -np.minimum.accumulate(values))


def regulator(f):
    """Regulator psi(f)(x) = -inf_{y <= x} min(f(y), 0).

    Returns a path of the same kind, non-negative and non-decreasing.
    """
    if isinstance(f, StepPath):
        psi = _running_regulator(f.all_values())
        return f.with_values(psi[0], psi[1:])
    if isinstance(f, GridPath):
        return f.with_values(_running_regulator(f.values))
    raise TypeError(f"unsupported path type {type(f).__name__}")


def reflect(f):
    """Reflection phi(f) = f + psi(f), non-negative everywhere."""
    if isinstance(f, StepPath):
        raw = f.all_values()
        phi = raw + _running_regulator(raw)
        return f.with_values(phi[0], phi[1:])
    if isinstance(f, GridPath):
        return f.with_values(f.values + _running_regulator(f.values))
    raise TypeError(f"unsupported path type {type(f).__name__}")


def hitting_time(f, level=0.0):
    """First time in [0, horizon] at which ``f <= level``, or None.

    For a GridPath the answer is the first grid point satisfying the
    condition: resolution-limited, and never earlier than the first grid
    crossing of a downward-crossing path.
    """
    if isinstance(f, StepPath):
        if f.initial_value <= level:
            return 0.0
        hits = np.flatnonzero(f.values <= level)
        return float(f.times[hits[0]]) if hits.size else None
    if isinstance(f, GridPath):
        hits = np.flatnonzero(f.values <= level)
        return float(hits[0] * f.dt) if hits.size else None
    raise TypeError(f"unsupported path type {type(f).__name__}")


def _positive_runs(mask):
    """(first, last) index pairs of maximal runs of True in ``mask``."""
    padded = np.concatenate(([0], mask.astype(np.int8), [0]))
    edges = np.diff(padded)
    firsts = np.flatnonzero(edges == 1)
    lasts = np.flatnonzero(edges == -1) - 1
    return zip(firsts, lasts)


def excursions_above_running_min(f):
    """Excursions of phi(f) away from zero, in time order.

    Grid values are read as held on [k*dt, (k+1)*dt), so each grid
    excursion is accurate to within dt at either end.
    """
    phi = reflect(f)
    if isinstance(f, StepPath):
        heights = phi.all_values()
        starts = np.concatenate(([0.0], f.times))
        ends = np.concatenate((f.times, [f.horizon]))
    elif isinstance(f, GridPath):
        heights = phi.values
        starts = f.times
        ends = np.minimum(starts + f.dt, f.horizon)
    else:
        raise TypeError(f"unsupported path type {type(f).__name__}")

    excursions = []
    for first, last in _positive_runs(heights > 0):
        start, end = float(starts[first]), float(ends[last])
        if end > start:
            height = float(heights[first:last + 1].max())
            excursions.append(Excursion(start, end, height))
    return excursions


def path_to_frame(f):
    """Tidy ``t,value`` table; a step path's first row carries its initial value."""
    if isinstance(f, StepPath):
        t = np.concatenate(([0.0], f.times))
        return pd.DataFrame({"t": t, "value": f.all_values()})
    return pd.DataFrame({"t": f.times, "value": f.values})


def write_path_csv(f, destination):
    path_to_frame(f).to_csv(destination, index=False, float_format=CSV_FLOAT_FORMAT)


def read_step_csv(source, horizon=None):
    frame = pd.read_csv(source, float_precision="round_trip")
    t = frame["t"].to_numpy(dtype=float)
    v = frame["value"].to_numpy(dtype=float)
    return StepPath(t[1:], v[1:], v[0], horizon)


def path_to_json(f):
    if isinstance(f, StepPath):
        document = {
            "kind": "step",
            "initial_value": f.initial_value,
            "horizon": f.horizon,
            "t": f.times.tolist(),
            "value": f.values.tolist(),
        }
    else:
        document = {"kind": "grid", "dt": f.dt, "value": f.values.tolist()}
    return json.dumps(document)


def path_from_json(text):
    document = json.loads(text)
    if document["kind"] == "step":
        return StepPath(document["t"], document["value"],
                        document["initial_value"], document["horizon"])
    return GridPath(document["dt"], document["value"])
