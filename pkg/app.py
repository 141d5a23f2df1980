"""
Transitory Queue Lab - Command-Line Front End

Each subcommand wraps one pipeline and writes CSV / JSON artifacts plus a
manifest into its output directory:

    simulate      one queue replication (Q, N, X, B, I, A paths)
    limit         limit-process paths and their reflection
    drift-check   scaled repeat counts against their parabolic drift
    idle-check    scaled cumulative idle time along the n grid
    converge      queue length against the reflected limit (KS)
    busy-period   first busy period against the limit hitting time (KS)
    excursions    excursions of the reflected limit or scaled queue
    calibrate     stable scale of the centered service partial sums
    render        plotly HTML figures for an existing output directory
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from models.arrivals_poisson import drift_trace_frame, simulate_marked_poisson
from models.distributions import SeedSpec, calibrate_stable_scale, stable_domain_scale
from models.limit_process import (
    CALIBRATION_REPS,
    CALIBRATION_STREAM,
    LimitSpec,
    s_alpha,
    simulate_limit_free,
)
from models.queue_sim import scaled_free_path, simulate_queue
from models.run_spec import RunSpec
from models.scaling import limit_stable_scale, natural_ell1
from utils.errors import LabError
from utils.export import SCHEMA_VERSION, ArtifactWriter, export_queue_run
from utils.paths import excursions_above_running_min, hitting_time, reflect
from utils.stats import (
    LIMIT_STREAM,
    PRELIMIT_STREAM,
    STREAMS,
    busy_period_comparison,
    drift_convergence_report,
    excursion_summary,
    idle_time_report,
    queue_limit_comparison,
)

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "DELTA_QUEUE_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "results"

EXIT_FAILURE = 1
EXIT_INVALID = 2


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_spec_options(parser):
    """Options mirroring RunSpec; absent flags leave the config value in force."""
    parser.add_argument("--config", help="JSON file with RunSpec field names")
    parser.add_argument("--n", type=_int_list, help="population size, or a comma list to sweep")
    parser.add_argument("--alpha", type=float, help="Pareto tail index in (1, 2]")
    parser.add_argument("--x-m", dest="x_m", type=float, help="Pareto scale (default: E[S] = 1)")
    parser.add_argument("--ell1", type=float, help="slowly varying constant")
    parser.add_argument("--q0", type=float, help="scaled initial queue length")
    parser.add_argument("--T", dest="T", type=float, help="scaled horizon")
    parser.add_argument("--reps", type=int, help="number of replications")
    parser.add_argument("--seed", dest="master_seed", type=int, help="master seed")
    parser.add_argument("--replication", type=int, help="replication index for simulate")
    parser.add_argument("--grid", type=int, help="grid points on [0, T]")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel replications")
    parser.add_argument("--checkpoints", type=_float_list, help="scaled times for converge")
    parser.add_argument("--lambda", dest="lam", type=float, help="drift rate of the limit")
    parser.add_argument("--s-alpha", dest="s_alpha", type=float, help="stable coefficient of the limit")
    parser.add_argument("--stable-scale", dest="stable_scale", type=float,
                        help="scale of the limit stable motion")
    parser.add_argument("--refine-dt", dest="refine_dt", type=float,
                        help="free-process sampling step inside idle periods")
    parser.add_argument("--source", choices=["limit", "queue"], help="path source for excursions")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--progress", action="store_true", help="show progress bars")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="app.py",
        description="Simulation lab for a transitory queue with heavy-tailed service",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name, argument_default=argparse.SUPPRESS)
        _add_spec_options(sub)
    return parser


def load_config(path):
    """Read a flat JSON object of RunSpec fields."""
    with open(path, encoding="utf-8") as handle:
        document = json.load(handle)
    if not isinstance(document, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return document


def resolve_spec(args):
    """Merge defaults, config file and flags (flags win) into a RunSpec."""
    options = vars(args)
    merged = load_config(options["config"]) if "config" in options else {}
    if isinstance(merged.get("n"), list):
        sizes = merged.pop("n")
        merged["n"] = sizes[0]
        merged.setdefault("n_values", sizes)
    flags = {k: v for k, v in options.items() if k in RunSpec.model_fields}
    if "n" in options:
        sizes = options["n"]
        if not sizes:
            raise ValueError("--n needs at least one value")
        flags["n"] = sizes[0]
        flags["n_values"] = sizes if len(sizes) > 1 else []
    merged.update(flags)
    return RunSpec(**merged)


def output_directory(spec, command):
    if spec.output_dir is not None:
        return Path(spec.output_dir)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)) / command


def _seeds(spec, streams=None):
    return {
        "master_seed": spec.master_seed,
        "replications": spec.reps,
        "streams": streams or dict(STREAMS),
    }


def _limit_spec(spec):
    model = spec.service_model
    lam = spec.lam if spec.lam is not None else model.lam
    coefficient = spec.s_alpha if spec.s_alpha is not None else s_alpha(model.mean, model.alpha)
    scale = spec.stable_scale if spec.stable_scale is not None else 1.0
    return LimitSpec(spec.alpha, spec.q0, lam, coefficient, spec.T, spec.dt, scale)


def cmd_simulate(spec, writer, args):
    rng = SeedSpec(spec.master_seed, spec.replication, PRELIMIT_STREAM).generator()
    run = simulate_queue(spec, rng)
    export_queue_run(writer, run)
    summary = {
        "events": run.event_count,
        "arrivals": int(run.arrival_times.size),
        "departures": int(run.D.at(run.horizon)),
        "backlog": run.backlog,
        "busy_fraction": run.busy_time(run.horizon) / run.horizon,
        "final_Q": int(run.Q.at(run.horizon)),
    }
    seeds = {"master_seed": spec.master_seed, "replication": spec.replication,
             "stream": PRELIMIT_STREAM}
    writer.write_manifest("simulate", spec, seeds, counts=summary,
                          extra={"scaling": asdict(spec.constants)})
    print(f"events={summary['events']} busy_fraction={summary['busy_fraction']:.6f} "
          f"final_Q={summary['final_Q']}")
    return 0


def cmd_limit(spec, writer, args):
    limit = _limit_spec(spec)
    rows = []
    for rep in range(spec.reps):
        free = simulate_limit_free(limit, SeedSpec(spec.master_seed, rep, LIMIT_STREAM).generator())
        reflected = reflect(free)
        writer.write_path(f"paths/free_{rep:04d}.csv", free)
        writer.write_path(f"paths/reflected_{rep:04d}.csv", reflected)
        hit = hitting_time(free, 0.0)
        rows.append({
            "replication": rep,
            "busy_period": np.nan if hit is None else hit,
            "final_free": free.values[-1],
            "final_reflected": reflected.values[-1],
            "max_reflected": reflected.values.max(),
        })
    columns = ["replication", "busy_period", "final_free", "final_reflected", "max_reflected"]
    writer.write_frame("limit_summary.csv", pd.DataFrame(rows, columns=columns))
    writer.write_manifest("limit", spec, _seeds(spec, {"limit": LIMIT_STREAM}),
                          counts={"paths": spec.reps}, extra={"limit": asdict(limit)})
    print(f"limit paths={spec.reps} steps={limit.steps}")
    return 0


def cmd_drift_check(spec, writer, args):
    report = drift_convergence_report([spec.alpha], spec.sweep, spec.T, spec.reps,
                                      spec.master_seed, spec.x_m, spec.ell1,
                                      spec.workers, args.progress)
    writer.write_report("drift_report", report)
    if spec.reps > 0:
        model = spec.service_model
        for n in spec.sweep:
            constants = spec.constants_for(n)
            rng = SeedSpec(spec.master_seed, 0, PRELIMIT_STREAM).generator()
            run = simulate_marked_poisson(n, model.lam / n, constants.tau(spec.T), rng)
            writer.write_frame(f"traces/drift_n{n}.csv", drift_trace_frame(run))
    writer.write_manifest("drift-check", spec, _seeds(spec, {"prelimit": PRELIMIT_STREAM}),
                          counts={"entries": len(report.entries)})
    for entry in report.select("drift"):
        print(f"n={entry.n} median_sup={entry.median:.6g}")
    return 0


def cmd_idle_check(spec, writer, args):
    report = idle_time_report([spec.alpha], spec.sweep, spec.T, spec.reps, spec.master_seed,
                              spec.q0, spec.x_m, spec.ell1, spec.workers, args.progress)
    writer.write_report("idle_report", report)
    writer.write_manifest("idle-check", spec, _seeds(spec, {"prelimit": PRELIMIT_STREAM}),
                          counts={"entries": len(report.entries)})
    for entry in report.entries:
        print(f"n={entry.n} median_idle={entry.median:.6g}")
    return 0


def cmd_converge(spec, writer, args):
    report = queue_limit_comparison(spec.alpha, spec.sweep, spec.checkpoint_times, spec.reps,
                                    spec.master_seed, spec.q0, spec.x_m, spec.ell1, spec.dt,
                                    spec.stable_scale, spec.workers, args.progress)
    writer.write_report("converge_report", report)
    writer.write_manifest("converge", spec, _seeds(spec), counts={"entries": len(report.entries)})
    for entry in report.select("ks_queue"):
        print(f"n={entry.n} t={entry.checkpoint} ks={entry.statistic:.4f}")
    return 0


def cmd_busy_period(spec, writer, args):
    report = busy_period_comparison(spec.alpha, spec.sweep, spec.reps, spec.master_seed,
                                    spec.q0, spec.T, spec.x_m, spec.ell1, spec.dt,
                                    spec.stable_scale, spec.workers, args.progress)
    writer.write_report("busy_period_report", report)
    writer.write_manifest("busy-period", spec, _seeds(spec),
                          counts={"entries": len(report.entries)})
    for entry in report.select("ks_busy_period"):
        print(f"n={entry.n} ks={entry.statistic:.4f}")
    return 0


def cmd_excursions(spec, writer, args):
    rows, summaries = [], []
    for rep in range(spec.reps):
        if spec.source == "limit":
            rng = SeedSpec(spec.master_seed, rep, LIMIT_STREAM).generator()
            free = simulate_limit_free(_limit_spec(spec), rng)
        else:
            rng = SeedSpec(spec.master_seed, rep, PRELIMIT_STREAM).generator()
            free = scaled_free_path(spec, rng)
        excursions = excursions_above_running_min(free)
        for index, e in enumerate(excursions):
            rows.append({"replication": rep, "index": index, "start": e.start,
                         "end": e.end, "length": e.length, "height": e.height})
        summaries.append({"replication": rep, **excursion_summary(excursions)})

    columns = ["replication", "index", "start", "end", "length", "height"]
    writer.write_frame("excursions.csv", pd.DataFrame(rows, columns=columns))
    decided = [s["first_is_longest"] for s in summaries if s["first_is_longest"] is not None]
    fraction = sum(decided) / len(decided) if decided else None
    writer.write_json("excursion_summary.json", {
        "schema_version": SCHEMA_VERSION,
        "source": spec.source,
        "first_is_longest_fraction": fraction,
        "replications": summaries,
    })
    stream = LIMIT_STREAM if spec.source == "limit" else PRELIMIT_STREAM
    writer.write_manifest("excursions", spec, _seeds(spec, {spec.source: stream}),
                          counts={"excursions": len(rows)})
    print(f"excursions={len(rows)} first_is_longest_fraction={fraction}")
    return 0


def cmd_calibrate(spec, writer, args):
    model = spec.service_model
    constants = spec.constants
    k = max(1, round(constants.time_factor))
    reps = spec.reps if spec.reps > 1 else CALIBRATION_REPS
    rng = SeedSpec(spec.master_seed, 0, CALIBRATION_STREAM).generator()
    empirical = calibrate_stable_scale(model, k, reps, rng)
    closed_form = stable_domain_scale(model) if model.alpha < 2.0 else None
    calibration = closed_form if closed_form is not None else empirical
    writer.write_json("calibration.json", {
        "schema_version": SCHEMA_VERSION,
        "alpha": model.alpha,
        "x_m": model.x_m,
        "partial_sum_length": k,
        "partial_sums": reps,
        "empirical_scale": empirical,
        "closed_form_scale": closed_form,
        "limit_stable_scale": limit_stable_scale(constants, calibration),
        "natural_ell1": natural_ell1(calibration, model.alpha),
    })
    writer.write_manifest("calibrate", spec, _seeds(spec, {"calibration": CALIBRATION_STREAM}))
    print(f"empirical={empirical:.6f} closed_form={closed_form}")
    return 0


def cmd_render(spec, writer, args):
    if spec.output_dir is None:
        raise ValueError("render needs --out pointing at an existing output directory")
    from visualizations.figures import render_directory

    files = render_directory(writer.root)
    print(f"figures={len(files)}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "limit": cmd_limit,
    "drift-check": cmd_drift_check,
    "idle-check": cmd_idle_check,
    "converge": cmd_converge,
    "busy-period": cmd_busy_period,
    "excursions": cmd_excursions,
    "calibrate": cmd_calibrate,
    "render": cmd_render,
}


def _fail(code, kind, message):
    print(json.dumps({"error": kind, "message": message}, sort_keys=True), file=sys.stderr)
    return code


def _validation_message(exc):
    parts = []
    for error in exc.errors():
        location = ".".join(str(p) for p in error["loc"]) or "spec"
        parts.append(f"{location}: {error['msg']}")
    return "; ".join(parts)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "progress"):
        args.progress = False
    logging.basicConfig(level=getattr(args, "log_level", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = resolve_spec(args)
        writer = ArtifactWriter(output_directory(spec, args.command))
        return COMMANDS[args.command](spec, writer, args)
    except ValidationError as exc:
        return _fail(EXIT_INVALID, "validation", _validation_message(exc))
    except ValueError as exc:
        return _fail(EXIT_INVALID, "invalid", str(exc))
    except (LabError, OSError) as exc:
        return _fail(EXIT_FAILURE, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
