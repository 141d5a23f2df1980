"""
Simulation of the heavy-traffic limit q0 + s_alpha * S(t) - (lam^2 / 2) t^2.

S is a spectrally positive alpha-stable Levy motion. Its increments are
sampled exactly on a uniform grid, so grid values are exact in
distribution and no small-jump truncation is needed.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from models.distributions import (
    SeedSpec,
    calibrate_stable_scale,
    sample_stable_increment,
    stable_domain_scale,
)
from models.scaling import limit_stable_scale
from utils.paths import GridPath, hitting_time, reflect

logger = logging.getLogger(__name__)

CALIBRATION_STREAM = 2
CALIBRATION_REPS = 4000


def s_alpha(mean_service, alpha):
    """Stable coefficient E[S]^(-(alpha + 1) / alpha)."""
    if not mean_service > 0:
        raise ValueError(f"mean service time must be positive, got {mean_service}")
    return mean_service ** (-(alpha + 1.0) / alpha)


@dataclass(frozen=True)
class LimitSpec:
    """Parameters of one limit-process grid simulation.

    ``stable_scale`` multiplies s_alpha * S and carries the scale of the
    prelimit stable fluctuations when the limit is compared against the
    queue; it is 1 for the unit-scale limit object.
    """

    alpha: float
    q0: float
    lam: float
    s_alpha: float
    T: float
    dt: float
    stable_scale: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")
        if self.q0 < 0:
            raise ValueError(f"q0 must be non-negative, got {self.q0}")
        if not self.T > 0 or not self.dt > 0:
            raise ValueError("horizon T and grid step dt must be positive")
        if self.s_alpha < 0 or self.stable_scale < 0:
            raise ValueError("stable coefficients must be non-negative")
        steps = round(self.T / self.dt)
        if steps < 1 or not math.isclose(steps * self.dt, self.T, rel_tol=1e-9):
            raise ValueError(f"grid step dt={self.dt} must divide the horizon T={self.T}")

    @classmethod
    def from_service_model(cls, model, q0, T, dt, stable_scale=1.0):
        """Limit whose lam and s_alpha are derived from the service law."""
        return cls(model.alpha, q0, model.lam, s_alpha(model.mean, model.alpha),
                   T, dt, stable_scale)

    @property
    def steps(self):
        return round(self.T / self.dt)

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt


def simulate_limit_paths(spec, rng, paths=1):
    """Free limit paths on the grid, one row per path.

    Returns:
        Array of shape (paths, steps + 1); column 0 equals q0 exactly.
    """
    increments = sample_stable_increment(spec.alpha, spec.dt, rng, size=(paths, spec.steps))
    stable = np.zeros((paths, spec.steps + 1))
    np.cumsum(increments, axis=1, out=stable[:, 1:])
    t = spec.times
    drift = 0.5 * spec.lam ** 2 * t ** 2
    return spec.q0 + spec.s_alpha * spec.stable_scale * stable - drift


def simulate_limit_free(spec, rng):
    return GridPath(spec.dt, simulate_limit_paths(spec, rng, 1)[0])


def simulate_limit_reflected(spec, rng):
    return reflect(simulate_limit_free(spec, rng))


def busy_period(spec, rng):
    """First grid time at which the free limit path is <= 0, or None."""
    return hitting_time(simulate_limit_free(spec, rng), 0.0)


def matched_stable_scale(model, constants, master_seed=0, reps=CALIBRATION_REPS):
    """Stable scale that aligns the limit with the scaled prelimit queue.

    Uses the closed-form domain-of-attraction scale for alpha < 2. At
    alpha = 2 there is no closed form, so the scale is measured on
    partial sums of tau_n(1) services from a dedicated seed stream.
    """
    if model.alpha < 2.0:
        calibration = stable_domain_scale(model)
    else:
        k = max(1, round(constants.time_factor))
        rng = SeedSpec(master_seed, 0, CALIBRATION_STREAM).generator()
        calibration = calibrate_stable_scale(model, k, reps, rng)
    scale = limit_stable_scale(constants, calibration)
    logger.debug("matched stable scale alpha=%s n=%d -> %.6f",
                 model.alpha, constants.n, scale)
    return scale
