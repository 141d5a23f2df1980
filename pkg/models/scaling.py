"""
Heavy-traffic scaling constants and the prelimit-to-scaled path transform.

With every slowly varying correction fixed to a positive constant, the
time factor is tau_n(1) = n^(alpha/(2 alpha - 1)) * ell1 and the space
factor is s_n = n^(-1/(2 alpha - 1)) * ell2 with ell2 = ell1^-2. These
balance the stable fluctuations of the service process against the
quadratic depletion drift of the arrival pool.
"""
import math
from dataclasses import dataclass

import numpy as np

from utils.errors import PathHorizonError
from utils.paths import GridPath

# relative slack when comparing a requested horizon against a simulated one
HORIZON_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ScalingConstants:
    n: int
    alpha: float
    ell1: float
    ell2: float
    time_factor: float
    space_factor: float
    backlog_factor: float

    @property
    def time_exponent(self):
        return self.alpha / (2.0 * self.alpha - 1.0)

    @property
    def space_exponent(self):
        return -1.0 / (2.0 * self.alpha - 1.0)

    def tau(self, t):
        """Unscaled time tau_n(t) for scaled time t."""
        return t * self.time_factor

    def backlog(self, q0):
        """Initial queue N_n(0) = ceil(q0 * n^(1/(2 alpha - 1)) / ell2)."""
        if q0 < 0:
            raise ValueError(f"q0 must be non-negative, got {q0}")
        # absorbs rounding noise such as 100.00000000000001
        return int(math.ceil(q0 * self.backlog_factor - 1e-9))


def scaling_constants(n, alpha, ell1=1.0):
    """Scaling constants for population size ``n`` and tail index ``alpha``."""
    if n < 1:
        raise ValueError(f"population size n must be at least 1, got {n}")
    if not 1.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    if not ell1 > 0:
        raise ValueError(f"ell1 must be positive, got {ell1}")
    ell2 = ell1 ** -2
    denominator = 2.0 * alpha - 1.0
    return ScalingConstants(
        n=int(n),
        alpha=float(alpha),
        ell1=float(ell1),
        ell2=ell2,
        time_factor=float(n) ** (alpha / denominator) * ell1,
        space_factor=float(n) ** (-1.0 / denominator) * ell2,
        backlog_factor=float(n) ** (1.0 / denominator) / ell2,
    )


def limit_stable_scale(constants, calibration):
    """Coefficient of s_alpha * S(t) that matches the scaled prelimit.

    ``calibration`` is the partial-sum scale of the service law (see
    ``stable_domain_scale``). The scaled renewal fluctuations carry an
    extra ell1^(1/alpha - 2).
    """
    return calibration * constants.ell1 ** (1.0 / constants.alpha - 2.0)


def natural_ell1(calibration, alpha):
    """The ell1 for which the limit stable motion has unit scale."""
    return calibration ** (alpha / (2.0 * alpha - 1.0))


def rescale(path, constants, T, grid):
    """Sample space_factor * path(t * time_factor) at ``grid`` points of [0, T].

    Args:
        path: StepPath on unscaled time.
        constants: ScalingConstants of the run.
        T: Scaled horizon.
        grid: Number of grid points (>= 2), so dt = T / (grid - 1).

    Returns:
        GridPath of the scaled process.
    """
    if grid < 2:
        raise ValueError("rescale needs at least two grid points")
    required = constants.tau(T)
    if path.horizon < required * (1.0 - HORIZON_TOLERANCE):
        raise PathHorizonError(
            f"path horizon {path.horizon} is shorter than the required {required}"
        )
    scaled_times = np.linspace(0.0, T, grid)
    values = constants.space_factor * path.at(scaled_times * constants.time_factor)
    return GridPath(T / (grid - 1), values)
