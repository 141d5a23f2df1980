"""
Thinned marked-Poisson representation of the arrival process.

Poisson epochs arrive at rate ``rate * n``; each epoch carries a uniform
mark among the ``n`` customers and only marks seen for the first time
count as arrivals. Marks are never stored: epoch ``i`` is a repeat when
its uniform satisfies U_i <= (i - 1 - R(i-1)) / n, the fraction of
distinct marks already seen. Uniforms live on (0, 1] so a zero threshold
never fires and the first epoch is always accepted.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd

from models.distributions import open_unit_uniform
from utils.paths import StepPath

logger = logging.getLogger(__name__)


class CoupledRepeats(NamedTuple):
    """Repeated-mark counts R(0..k) with their pathwise lower and upper bounds."""

    low: np.ndarray
    mid: np.ndarray
    up: np.ndarray


def _check_uniforms(k, uniforms):
    uniforms = np.asarray(uniforms, dtype=float)
    if k < 0 or k > uniforms.shape[-1]:
        raise ValueError(f"k={k} exceeds the {uniforms.shape[-1]} uniforms supplied")
    head = uniforms[..., :k]
    if np.any(head <= 0.0) or np.any(head > 1.0):
        raise ValueError("uniforms must lie in (0, 1]")
    return head


def recursive_repeats(k, n, uniforms):
    """R(0..k) from R(i) = R(i-1) + 1{U_i <= (i - 1 - R(i-1)) / n}.

    ``uniforms`` may carry leading batch axes; the recursion runs along
    the last axis. Returns an integer array whose last axis has k + 1
    entries, starting at R(0) = 0.
    """
    head = _check_uniforms(k, uniforms)
    if head.ndim == 1:
        counts = [0] * (k + 1)
        r = 0
        for i, u in enumerate(head.tolist(), start=1):
            if u <= (i - 1 - r) / n:
                r += 1
            counts[i] = r
        return np.asarray(counts, dtype=np.int64)

    counts = np.zeros(head.shape[:-1] + (k + 1,), dtype=np.int64)
    r = np.zeros(head.shape[:-1], dtype=np.int64)
    for i in range(1, k + 1):
        r = r + (head[..., i - 1] <= (i - 1 - r) / n)
        counts[..., i] = r
    return counts


def coupled_bounds(k, n, uniforms):
    """Lower bound, recursion and upper bound driven by the same uniforms.

    R_up(i) counts U_j <= (j - 1) / n, ignoring repeats already seen.
    R_low(i) counts U_j <= (j - 1 - R_up(j - 1)) / n. Since
    R_low <= R <= R_up holds index by index, the sandwich is exact.
    """
    head = _check_uniforms(k, uniforms)
    if head.ndim != 1:
        raise ValueError("coupled_bounds expects a single sequence of uniforms")
    index = np.arange(1, k + 1)
    up = np.concatenate(([0], np.cumsum(head <= (index - 1) / n)))
    low = np.concatenate(([0], np.cumsum(head <= (index - 1 - up[:-1]) / n)))
    mid = recursive_repeats(k, n, head)
    return CoupledRepeats(low.astype(np.int64), mid, up.astype(np.int64))


@dataclass(frozen=True, eq=False)
class MarkedPoissonRun:
    """One thinned marked-Poisson replication on [0, horizon].

    Attributes:
        n: Number of marks (customers).
        event_times: Poisson epochs, sorted.
        uniforms: Acceptance uniform of each epoch, on (0, 1].
        accepted: Whether each epoch carried a new mark.
        R: Repeated-mark count after each epoch.
        D: Distinct marks seen after each epoch, D(i) = i - R(i).
        horizon: End of the window.
    """

    n: int
    event_times: np.ndarray
    uniforms: np.ndarray
    accepted: np.ndarray
    R: StepPath
    D: np.ndarray
    horizon: float

    @property
    def Pi(self):
        """Poisson counting process."""
        counts = np.arange(1, self.event_times.size + 1)
        return StepPath(self.event_times, counts, 0.0, self.horizon)

    @property
    def arrivals(self):
        """Accepted count A(t) = Pi(t) - R(t)."""
        return StepPath(self.event_times, self.D, 0.0, self.horizon)

    def accepted_count(self, t):
        return self.arrivals.at(t)

    def coupled_paths(self):
        """R_low, R and R_up composed with the Poisson clock."""
        bounds = coupled_bounds(self.event_times.size, self.n, self.uniforms)
        return CoupledRepeats(*(
            StepPath(self.event_times, seq[1:], 0.0, self.horizon) for seq in bounds
        ))


def simulate_marked_poisson(n, rate, horizon, rng):
    """Simulate the thinned marked-Poisson arrivals of ``n`` customers.

    Args:
        n: Number of customers.
        rate: Per-customer clock rate; epochs arrive at rate * n.
        horizon: Window length, unscaled.
        rng: numpy Generator.

    Returns:
        MarkedPoissonRun
    """
    if n < 1:
        raise ValueError(f"population size n must be at least 1, got {n}")
    if not rate > 0 or not horizon > 0:
        raise ValueError("rate and horizon must be positive")
    count = int(rng.poisson(rate * n * horizon))
    event_times = np.sort(rng.uniform(0.0, horizon, size=count))
    uniforms = open_unit_uniform(rng, count)
    repeats = recursive_repeats(count, n, uniforms)
    accepted = np.diff(repeats) == 0
    distinct = np.arange(1, count + 1) - repeats[1:]
    logger.debug("marked poisson run: n=%d epochs=%d accepted=%d",
                 n, count, int(accepted.sum()))
    return MarkedPoissonRun(
        n=int(n),
        event_times=event_times,
        uniforms=uniforms,
        accepted=accepted,
        R=StepPath(event_times, repeats[1:], 0.0, horizon),
        D=distinct,
        horizon=float(horizon),
    )


def drift_trace_frame(run):
    """Table of (t, R, R_up, R_low) at every Poisson epoch."""
    low, mid, up = coupled_bounds(run.event_times.size, run.n, run.uniforms)
    return pd.DataFrame({
        "t": run.event_times,
        "R": mid[1:],
        "R_up": up[1:],
        "R_low": low[1:],
    })
