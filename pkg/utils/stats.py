"""
Statistical machinery for the convergence checks.

Convergence in distribution is operationalized at fixed checkpoints by
Kolmogorov-Smirnov distances; functional statements (drift, idle time)
by the median of a per-replication sup statistic along a grid of n.
Every report records the master seed and the stream layout so each
entry can be recomputed bit for bit:

- stream 0: prelimit simulation of replication ``r``
- stream 1: limit-process path of replication ``r``
- stream 2: stable scale calibration (alpha = 2 only)
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field
from scipy import integrate
from tqdm import tqdm

from models.arrivals_poisson import simulate_marked_poisson
from models.distributions import SeedSpec, ServiceModel
from models.limit_process import LimitSpec, matched_stable_scale, simulate_limit_free
from models.queue_sim import simulate_queue
from models.run_spec import RunSpec
from models.scaling import scaling_constants
from utils.errors import LabError, QuadratureError, SimulationError
from utils.export import SCHEMA_VERSION
from utils.paths import hitting_time, reflect

logger = logging.getLogger(__name__)

PRELIMIT_STREAM = 0
LIMIT_STREAM = 1
STREAMS = {"prelimit": PRELIMIT_STREAM, "limit": LIMIT_STREAM, "calibration": 2}

# exp(-theta^alpha) is below 1e-20 beyond this point
_CF_CUTOFF = 46.0


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n1: int
    n2: int


def ks_two_sample(a, b):
    """Exact two-sample Kolmogorov-Smirnov distance.

    Both empirical CDFs are evaluated at every pooled sample point, where
    the supremum of their right-continuous difference is attained.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("Kolmogorov-Smirnov distance needs two non-empty samples")
    pooled = np.concatenate((a, b))
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return KsResult(float(np.max(np.abs(cdf_a - cdf_b))), a.size, b.size)


def ks_against_cdf(samples, cdf):
    """One-sample sup distance between the empirical CDF and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("Kolmogorov-Smirnov distance needs a non-empty sample")
    f = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, x.size + 1) / x.size - f
    lower = f - np.arange(x.size) / x.size
    return float(max(upper.max(), lower.max()))


def _stable_cdf_point(alpha, x):
    zeta = math.tan(math.pi * alpha / 2.0)
    upper = _CF_CUTOFF ** (1.0 / alpha)

    def integrand(theta):
        return math.exp(-theta ** alpha) * math.sin(theta ** alpha * zeta - theta * x) / theta

    result = integrate.quad(integrand, 0.0, upper, limit=1000,
                            epsabs=1e-10, epsrel=1e-10, full_output=1)
    if len(result) > 3:
        raise QuadratureError(f"stable CDF quadrature failed at alpha={alpha}, x={x}: {result[3]}")
    return 0.5 - result[0] / math.pi


def stable_cdf_oracle(alpha, x):
    """CDF of the unit S1(alpha, beta=1) law by Gil-Pelaez inversion.

    F(x) = 1/2 - (1/pi) int_0^inf exp(-u^alpha) sin(u^alpha tan(pi alpha / 2) - u x) / u du

    Accepts scalar or array ``x``. At alpha = 2 this is the N(0, 2) CDF.
    """
    if not 1.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    points = np.asarray(x, dtype=float)
    values = np.array([_stable_cdf_point(alpha, float(v)) for v in points.ravel()])
    values = np.clip(values, 0.0, 1.0).reshape(points.shape)
    return float(values) if values.ndim == 0 else values


def sup_deviation(path, constants, T, reference):
    """sup_{t <= T} |s_n path(tau_n t) - reference(t)| for a step path.

    ``reference`` must be continuous and non-decreasing with array
    support. Between events the difference is monotone, so the supremum
    is attained at 0, at T, or on either side of an event.
    """
    horizon = constants.tau(T)
    within = path.times <= horizon
    u = path.times[within] / constants.time_factor
    right = constants.space_factor * path.values[within]
    left = constants.space_factor * np.concatenate(([path.initial_value], path.values[within][:-1]))
    g = reference(u)
    ends = [
        abs(constants.space_factor * path.initial_value - reference(0.0)),
        abs(constants.space_factor * path.at(horizon) - reference(T)),
    ]
    candidates = np.concatenate((np.abs(right - g), np.abs(left - g), ends))
    return float(candidates.max())


def drift_statistics(run, constants, T, lam):
    """Sup distances of the scaled repeat counts from lam^2 t^2 / 2.

    Also reports the sup distance of the scaled Poisson clock from its
    mean lam * tau_n(1) t.
    """
    def parabola(t):
        return 0.5 * lam ** 2 * np.square(t)

    def poisson_mean(t):
        return constants.space_factor * lam * constants.time_factor * np.asarray(t)

    low, mid, up = run.coupled_paths()
    return {
        "drift": sup_deviation(mid, constants, T, parabola),
        "drift_low": sup_deviation(low, constants, T, parabola),
        "drift_up": sup_deviation(up, constants, T, parabola),
        "poisson": sup_deviation(run.Pi, constants, T, poisson_mean),
    }


def poisson_fluctuation_sup(run, constants, T, lam):
    return drift_statistics(run, constants, T, lam)["poisson"]


class ConvergenceEntry(BaseModel):
    """One (alpha, n, metric[, checkpoint]) cell of a report."""

    alpha: float
    n: int
    metric: str
    reps: int
    checkpoint: Optional[float] = None
    statistic: Optional[float] = None
    median: Optional[float] = None
    q10: Optional[float] = None
    q90: Optional[float] = None
    stable_scale: Optional[float] = None
    values: list[Optional[float]] = Field(default_factory=list)


class ConvergenceReport(BaseModel):
    """Per-n convergence diagnostics with the seeds needed to rerun them."""

    schema_version: int = SCHEMA_VERSION
    kind: str
    master_seed: int
    streams: dict[str, int] = Field(default_factory=lambda: dict(STREAMS))
    alphas: list[float]
    n_values: list[int]
    reps: int
    parameters: dict[str, Any] = Field(default_factory=dict)
    entries: list[ConvergenceEntry] = Field(default_factory=list)

    def select(self, metric, alpha=None, checkpoint=None):
        """Entries of one metric, ordered as the n grid."""
        return [
            e for e in self.entries
            if e.metric == metric
            and (alpha is None or e.alpha == alpha)
            and (checkpoint is None or e.checkpoint == checkpoint)
        ]

    def to_frame(self):
        """Flat table without the per-replication values."""
        rows = [e.model_dump(exclude={"values"}) for e in self.entries]
        columns = list(ConvergenceEntry.model_fields)
        columns.remove("values")
        return pd.DataFrame(rows, columns=columns)


def _finite_or_none(value):
    value = float(value)
    return value if math.isfinite(value) else None


def _summary_entry(alpha, n, metric, values, **extra):
    values = np.asarray(values, dtype=float)
    # nearest rank keeps censored +inf values out of the interpolation
    q10, median, q90 = np.quantile(values, [0.1, 0.5, 0.9], method="nearest")
    return ConvergenceEntry(
        alpha=alpha, n=n, metric=metric, reps=values.size,
        median=_finite_or_none(median), q10=_finite_or_none(q10), q90=_finite_or_none(q90),
        values=[_finite_or_none(v) for v in values], **extra,
    )


def _guarded(task, alpha, n, replication, kwargs):
    try:
        return replication, task(alpha=alpha, n=n, replication=replication, **kwargs)
    except LabError:
        raise
    except Exception as exc:
        raise SimulationError(str(exc), alpha=alpha, n=n, replication=replication) from exc


def _replicate(task, alpha, n, reps, workers=1, progress=False, **kwargs):
    """Run ``task`` for replications 0..reps-1 and return results in replication order."""
    label = f"{task.__name__.strip('_')} alpha={alpha} n={n}"
    jobs = (
        delayed(_guarded)(task, alpha, n, rep, kwargs)
        for rep in tqdm(range(reps), desc=label, disable=not progress, leave=False)
    )
    results = Parallel(n_jobs=workers)(jobs)
    return [value for _, value in sorted(results, key=lambda item: item[0])]


def _service_model(alpha, x_m):
    return ServiceModel.with_mean(alpha) if x_m is None else ServiceModel(alpha, x_m)


def _drift_task(alpha, n, replication, master_seed, T, x_m, ell1):
    model = _service_model(alpha, x_m)
    constants = scaling_constants(n, alpha, ell1)
    rng = SeedSpec(master_seed, replication, PRELIMIT_STREAM).generator()
    run = simulate_marked_poisson(n, model.lam / n, constants.tau(T), rng)
    return drift_statistics(run, constants, T, model.lam)


def drift_convergence_report(alphas, n_values, T, reps, master_seed, x_m=None, ell1=1.0,
                             workers=1, progress=False):
    """Median sup distance of the scaled repeat count from its parabola, per (alpha, n)."""
    report = ConvergenceReport(
        kind="drift", master_seed=master_seed, alphas=list(alphas), n_values=list(n_values),
        reps=reps, parameters={"T": T, "x_m": x_m, "ell1": ell1},
    )
    if reps == 0:
        return report
    for alpha in alphas:
        for n in n_values:
            results = _replicate(_drift_task, alpha, n, reps, workers, progress,
                                 master_seed=master_seed, T=T, x_m=x_m, ell1=ell1)
            for metric in ("drift", "drift_low", "drift_up", "poisson"):
                report.entries.append(
                    _summary_entry(alpha, n, metric, [r[metric] for r in results])
                )
            logger.info("drift alpha=%s n=%d reps=%d median=%.6g",
                        alpha, n, reps, report.entries[-4].median)
    return report


def _cell_spec(alpha, n, T, q0, x_m, ell1):
    return RunSpec(n=n, alpha=alpha, x_m=x_m, ell1=ell1, q0=q0, T=T)


def _idle_task(alpha, n, replication, master_seed, T, q0, x_m, ell1):
    spec = _cell_spec(alpha, n, T, q0, x_m, ell1)
    run = simulate_queue(spec, SeedSpec(master_seed, replication, PRELIMIT_STREAM).generator())
    return run.idle_time(run.horizon) / spec.constants.time_factor


def idle_time_report(alphas, n_values, T, reps, master_seed, q0=1.0, x_m=None, ell1=1.0,
                     workers=1, progress=False):
    """Median of sup_{t <= T} I(tau_n t) / tau_n(1), per (alpha, n).

    The idle time is non-decreasing, so the supremum is its value at T.
    """
    report = ConvergenceReport(
        kind="idle", master_seed=master_seed, alphas=list(alphas), n_values=list(n_values),
        reps=reps, parameters={"T": T, "q0": q0, "x_m": x_m, "ell1": ell1},
    )
    if reps == 0:
        return report
    for alpha in alphas:
        for n in n_values:
            values = _replicate(_idle_task, alpha, n, reps, workers, progress,
                                master_seed=master_seed, T=T, q0=q0, x_m=x_m, ell1=ell1)
            report.entries.append(_summary_entry(alpha, n, "idle", values))
            logger.info("idle alpha=%s n=%d reps=%d median=%.6g",
                        alpha, n, reps, report.entries[-1].median)
    return report


def _queue_task(alpha, n, replication, master_seed, T, q0, x_m, ell1, checkpoints):
    spec = _cell_spec(alpha, n, T, q0, x_m, ell1)
    run = simulate_queue(spec, SeedSpec(master_seed, replication, PRELIMIT_STREAM).generator())
    constants = spec.constants
    return constants.space_factor * run.Q.at(constants.tau(np.asarray(checkpoints)))


def _limit_task(alpha, n, replication, master_seed, limit, checkpoints):
    rng = SeedSpec(master_seed, replication, LIMIT_STREAM).generator()
    return reflect(simulate_limit_free(limit, rng)).at(np.asarray(checkpoints))


def _limit_horizon(T, dt):
    return dt * math.ceil(T / dt - 1e-9)


def _resolve_scale(model, constants, master_seed, stable_scale):
    if stable_scale is not None:
        return stable_scale
    return matched_stable_scale(model, constants, master_seed)


def queue_limit_comparison(alpha, n_values, t_checkpoints, reps, master_seed, q0=1.0,
                           x_m=None, ell1=1.0, dt=1e-3, stable_scale=None,
                           workers=1, progress=False):
    """KS distance between scaled queue lengths and the reflected limit.

    For each n and checkpoint t, compares s_n Q(tau_n t) over ``reps``
    prelimit replications against the reflected limit at t over
    ``reps`` grid paths. Without an explicit ``stable_scale`` the limit
    uses the scale matched to the service law at that n.
    """
    checkpoints = sorted(float(t) for t in t_checkpoints)
    T = max(checkpoints)
    report = ConvergenceReport(
        kind="queue_limit", master_seed=master_seed, alphas=[alpha], n_values=list(n_values),
        reps=reps, parameters={"checkpoints": checkpoints, "q0": q0, "x_m": x_m,
                               "ell1": ell1, "dt": dt},
    )
    if reps == 0:
        return report
    model = _service_model(alpha, x_m)
    for n in n_values:
        constants = scaling_constants(n, alpha, ell1)
        scale = _resolve_scale(model, constants, master_seed, stable_scale)
        limit = LimitSpec.from_service_model(model, q0, _limit_horizon(T, dt), dt, scale)
        prelimit = np.array(_replicate(_queue_task, alpha, n, reps, workers, progress,
                                       master_seed=master_seed, T=T, q0=q0, x_m=x_m,
                                       ell1=ell1, checkpoints=checkpoints))
        reflected = np.array(_replicate(_limit_task, alpha, n, reps, workers, progress,
                                        master_seed=master_seed, limit=limit,
                                        checkpoints=checkpoints))
        for j, t in enumerate(checkpoints):
            ks = ks_two_sample(prelimit[:, j], reflected[:, j])
            entry = _summary_entry(alpha, n, "ks_queue", prelimit[:, j], checkpoint=t,
                                   statistic=ks.statistic, stable_scale=scale)
            report.entries.append(entry)
            report.entries.append(
                _summary_entry(alpha, n, "limit_queue", reflected[:, j], checkpoint=t,
                               stable_scale=scale)
            )
            logger.info("queue vs limit alpha=%s n=%d t=%s reps=%d ks=%.4f",
                        alpha, n, t, reps, ks.statistic)
    return report


def _prelimit_busy_task(alpha, n, replication, master_seed, T, q0, x_m, ell1):
    spec = _cell_spec(alpha, n, T, q0, x_m, ell1)
    run = simulate_queue(spec, SeedSpec(master_seed, replication, PRELIMIT_STREAM).generator())
    hit = hitting_time(run.Q, 0.0)
    return math.inf if hit is None else hit / spec.constants.time_factor


def _limit_busy_task(alpha, n, replication, master_seed, limit):
    rng = SeedSpec(master_seed, replication, LIMIT_STREAM).generator()
    hit = hitting_time(simulate_limit_free(limit, rng), 0.0)
    return math.inf if hit is None else hit


def busy_period_comparison(alpha, n_values, reps, master_seed, q0=1.0, T=3.0, x_m=None,
                           ell1=1.0, dt=1e-3, stable_scale=None, workers=1, progress=False):
    """KS distance between scaled first busy periods and the limit hitting time.

    A busy period not ended by T is recorded as +inf on either side, so
    censoring is treated symmetrically.
    """
    report = ConvergenceReport(
        kind="busy_period", master_seed=master_seed, alphas=[alpha], n_values=list(n_values),
        reps=reps, parameters={"T": T, "q0": q0, "x_m": x_m, "ell1": ell1, "dt": dt},
    )
    if reps == 0:
        return report
    model = _service_model(alpha, x_m)
    for n in n_values:
        constants = scaling_constants(n, alpha, ell1)
        scale = _resolve_scale(model, constants, master_seed, stable_scale)
        limit = LimitSpec.from_service_model(model, q0, _limit_horizon(T, dt), dt, scale)
        prelimit = _replicate(_prelimit_busy_task, alpha, n, reps, workers, progress,
                              master_seed=master_seed, T=T, q0=q0, x_m=x_m, ell1=ell1)
        hits = _replicate(_limit_busy_task, alpha, n, reps, workers, progress,
                          master_seed=master_seed, limit=limit)
        ks = ks_two_sample(prelimit, hits)
        report.entries.append(_summary_entry(alpha, n, "ks_busy_period", prelimit,
                                             statistic=ks.statistic, stable_scale=scale))
        report.entries.append(_summary_entry(alpha, n, "limit_busy_period", hits,
                                             stable_scale=scale))
        logger.info("busy period alpha=%s n=%d reps=%d ks=%.4f censored=%d",
                    alpha, n, reps, ks.statistic, int(np.isinf(prelimit).sum()))
    return report


def excursion_summary(excursions):
    """Count, lengths and ordering of a list of excursions."""
    lengths = [e.length for e in excursions]
    longest = max(lengths) if lengths else None
    return {
        "count": len(excursions),
        "lengths": lengths,
        "heights": [e.height for e in excursions],
        "longest": longest,
        "total_length": float(sum(lengths)),
        "first_is_longest": (lengths[0] == longest) if lengths else None,
    }
