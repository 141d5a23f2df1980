"""
Random variate generation for arrivals, heavy-tailed services and stable increments.

Stable convention
-----------------
Stable variates use the Samorodnitsky-Taqqu S1 parameterization (scipy's
default for ``levy_stable``) with maximal positive skew beta = 1, unit
scale and zero location. Its characteristic function is

    E[exp(i u X)] = exp(-|u|^alpha (1 - i sign(u) tan(pi alpha / 2)))

which is continuous in alpha and reduces to N(0, 2) at alpha = 2. For
alpha in (1, 2) the law is centered (mean zero) and only the right tail
is heavy.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64


@dataclass(frozen=True)
class ServiceModel:
    """Pareto service law P(S > t) = (x_m / t)^alpha for t >= x_m.

    The arrival rate ``lam`` is fixed by criticality: lam * mean = 1.
    """

    alpha: float
    x_m: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")
        if not self.x_m > 0:
            raise ValueError(f"Pareto scale x_m must be positive, got {self.x_m}")

    @classmethod
    def with_mean(cls, alpha, mean=1.0):
        """Service model whose Pareto scale gives E[S] = mean."""
        return cls(alpha, mean * (alpha - 1.0) / alpha)

    @property
    def mean(self):
        return self.alpha * self.x_m / (self.alpha - 1.0)

    @property
    def lam(self):
        return 1.0 / self.mean


@dataclass(frozen=True)
class SeedSpec:
    """Address of one independent random stream.

    Streams are derived from ``(master_seed, replication_index, stream)``
    through numpy's SeedSequence, so equal specs reproduce identical
    draws and distinct specs give statistically independent PCG64 streams.
    ``stream`` separates the roles inside one replication (for example
    prelimit versus limit samples).
    """

    master_seed: int
    replication_index: int = 0
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < MAX_SEED:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.replication_index < 0 or self.stream < 0:
            raise ValueError("replication_index and stream must be non-negative")

    def generator(self):
        sequence = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.replication_index, self.stream)
        )
        return np.random.Generator(np.random.PCG64(sequence))


def open_unit_uniform(rng, size=None):
    # Generator.random is on [0, 1); reflect it onto (0, 1]
    return 1.0 - rng.random(size)


def exponential_from_uniform(u, rate):
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return -np.log(u) / rate


def sample_exponential(rate, rng, size=None):
    """Exponential variate(s) with the given rate by inversion."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return exponential_from_uniform(open_unit_uniform(rng, size), rate)


def pareto_from_uniform(u, model):
    return model.x_m * np.power(u, -1.0 / model.alpha)


def sample_pareto(model, rng, size=None):
    """Pareto service time(s) x_m * U^(-1/alpha), always >= x_m."""
    return pareto_from_uniform(open_unit_uniform(rng, size), model)


def stable_from_uniforms(alpha, v, w):
    """Chambers-Mallows-Stuck transform for S1(alpha, beta=1, 1, 0).

    Args:
        alpha: Stability index in (1, 2].
        v: Angles uniform on (-pi/2, pi/2).
        w: Standard exponential variates.

    Returns:
        Array of unit-scale, maximally right-skewed stable variates.
    """
    zeta = math.tan(math.pi * alpha / 2.0)
    b = math.atan(zeta) / alpha
    s = (1.0 + zeta * zeta) ** (1.0 / (2.0 * alpha))
    shifted = alpha * (v + b)
    return (
        s
        * np.sin(shifted)
        / np.power(np.cos(v), 1.0 / alpha)
        * np.power(np.cos(v - shifted) / w, (1.0 - alpha) / alpha)
    )


def sample_stable_increment(alpha, dt, rng, size=None):
    """Increment(s) of unit-scale spectrally positive alpha-stable motion over ``dt``.

    Self-similarity gives the increment as dt^(1/alpha) times a unit
    variate. At alpha = 2 the result is N(0, 2 dt).
    """
    if not 1.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    if not dt > 0:
        raise ValueError(f"time step dt must be positive, got {dt}")
    v = math.pi * (open_unit_uniform(rng, size) - 0.5)
    w = sample_exponential(1.0, rng, size)
    return dt ** (1.0 / alpha) * stable_from_uniforms(alpha, v, w)


def stable_domain_scale(model):
    """Scale of the S1 law attracting centered Pareto partial sums.

    (S_1 + ... + S_k - k E[S]) / k^(1/alpha) converges to sigma times a
    unit S1(alpha, 1) variate, where

        sigma^alpha = x_m^alpha * Gamma(2 - alpha) * |cos(pi alpha / 2)| / (alpha - 1).
    """
    alpha = model.alpha
    if alpha >= 2.0:
        raise ValueError("no closed-form domain scale at alpha = 2; use calibrate_stable_scale")
    tail = model.x_m ** alpha
    power = tail * gamma(2.0 - alpha) * abs(math.cos(math.pi * alpha / 2.0)) / (alpha - 1.0)
    return power ** (1.0 / alpha)


def _interquartile_range(samples):
    q25, q75 = np.quantile(samples, [0.25, 0.75])
    return q75 - q25


def calibrate_stable_scale(model, k, reps, rng, chunk_rows=None):
    """Measure the partial-sum scale by interquartile matching.

    Simulates ``reps`` centered partial sums of ``k`` Pareto services,
    normalizes by k^(1/alpha) and divides their interquartile range by
    that of ``reps`` unit-scale stable draws.

    Returns:
        float: the measured scale. At alpha = 2 the Pareto law sits on
        the boundary of the Gaussian domain and the value grows slowly
        with ``k``; it is a property of the chosen ``k``.
    """
    if k < 1 or reps < 2:
        raise ValueError("calibration needs k >= 1 and reps >= 2")
    rows = chunk_rows or max(1, 2_000_000 // k)
    sums = []
    remaining = reps
    while remaining > 0:
        batch = min(rows, remaining)
        totals = sample_pareto(model, rng, size=(batch, k)).sum(axis=1)
        sums.append((totals - k * model.mean) / k ** (1.0 / model.alpha))
        remaining -= batch
    normalized = np.concatenate(sums)
    reference = sample_stable_increment(model.alpha, 1.0, rng, size=reps)
    scale = _interquartile_range(normalized) / _interquartile_range(reference)
    logger.debug("calibrated stable scale alpha=%s k=%d reps=%d -> %.6f",
                 model.alpha, k, reps, scale)
    return float(scale)
