"""
Post-hoc plotly figures built from the CSV artifacts of a finished run.

Nothing in the simulation core imports this module.
"""
import logging
from pathlib import Path

import pandas as pd
import plotly.graph_objects as go

from utils.export import ArtifactWriter, read_manifest

logger = logging.getLogger(__name__)

PATH_COLORS = {"Q": "orange", "N": "deepskyblue", "X": "lightgreen", "I": "violet",
               "free": "deepskyblue", "reflected": "orange"}


def _dark_layout(fig, title, xaxis_title, yaxis_title, **kwargs):
    fig.update_layout(
        title=title,
        xaxis_title=xaxis_title,
        yaxis_title=yaxis_title,
        plot_bgcolor="black",
        paper_bgcolor="black",
        font=dict(color="white"),
        margin=dict(l=50, r=50, b=50, t=50),
        **kwargs,
    )
    return fig


def create_path_figure(frames, title="Sample paths", step=True):
    """
    Overlay several ``t,value`` tables on one chart.

    Args:
        frames: Mapping from trace name to a DataFrame with columns t and value
        title: Figure title
        step: Draw the traces as right-continuous steps

    Returns:
        fig: Plotly figure
    """
    fig = go.Figure()
    for name, frame in frames.items():
        fig.add_trace(go.Scatter(
            x=frame["t"],
            y=frame["value"],
            mode="lines",
            name=name,
            line=dict(color=PATH_COLORS.get(name), shape="hv" if step else "linear"),
        ))
    return _dark_layout(fig, title, "t", "value")


def create_limit_figure(free, reflected, title="Limit process and its reflection"):
    """Free limit path with its reflection and the zero level."""
    fig = create_path_figure({"free": free, "reflected": reflected}, title, step=False)
    fig.add_hline(y=0.0, line=dict(color="white", width=1, dash="dash"))
    return fig


def create_drift_figure(trace):
    """Repeated-mark count with its coupling bounds."""
    fig = go.Figure()
    for column, color in (("R_low", "green"), ("R", "orange"), ("R_up", "red")):
        fig.add_trace(go.Scatter(x=trace["t"], y=trace[column], mode="lines",
                                 name=column, line=dict(color=color, shape="hv")))
    return _dark_layout(fig, "Repeated marks and coupling bounds", "t (unscaled)", "count")


def create_convergence_figure(table, metric, value="median"):
    """
    Plot a report column against n on log-log axes, one trace per
    (alpha, checkpoint) group, with the 10-90% band when available.
    """
    rows = table[table["metric"] == metric]
    fig = go.Figure()
    group_keys = ["alpha", "checkpoint"]
    for keys, group in rows.groupby(group_keys, dropna=False):
        alpha, checkpoint = keys
        label = f"alpha={alpha}" if pd.isna(checkpoint) else f"alpha={alpha}, t={checkpoint}"
        group = group.sort_values("n")
        error = None
        if value == "median" and group["q90"].notna().all():
            error = dict(type="data", symmetric=False,
                         array=group["q90"] - group["median"],
                         arrayminus=group["median"] - group["q10"])
        fig.add_trace(go.Scatter(x=group["n"], y=group[value], mode="lines+markers",
                                 name=label, error_y=error))
    return _dark_layout(fig, f"{metric} ({value}) against n", "n", value,
                        xaxis_type="log", yaxis_type="log")


def create_excursion_figure(table):
    """Excursion length against start time, marker size by height."""
    fig = go.Figure()
    for rep, group in table.groupby("replication"):
        fig.add_trace(go.Scatter(
            x=group["start"],
            y=group["length"],
            mode="markers",
            name=f"rep {rep}",
            marker=dict(size=6 + 10 * group["height"] / max(table["height"].max(), 1e-12)),
        ))
    return _dark_layout(fig, "Excursions of the reflected path", "start", "length")


def _read(root, name):
    return pd.read_csv(Path(root) / name, float_precision="round_trip")


def _figures_for(root, manifest):
    files = set(manifest["files"])
    command = manifest["command"]
    if command == "simulate":
        frames = {name: _read(root, f"{name}.csv") for name in ("Q", "N", "X") if f"{name}.csv" in files}
        yield "paths", create_path_figure(frames, "Queue length, free process and net input")
    elif command == "limit":
        free = sorted(f for f in files if f.startswith("paths/free_"))
        if free:
            reflected = free[0].replace("free_", "reflected_")
            yield "limit", create_limit_figure(_read(root, free[0]), _read(root, reflected))
    elif command == "excursions" and "excursions.csv" in files:
        table = _read(root, "excursions.csv")
        if not table.empty:
            yield "excursions", create_excursion_figure(table)

    reports = {
        "drift_report.csv": ("drift", "median"),
        "idle_report.csv": ("idle", "median"),
        "converge_report.csv": ("ks_queue", "statistic"),
        "busy_period_report.csv": ("ks_busy_period", "statistic"),
    }
    for name, (metric, value) in reports.items():
        if name in files:
            table = _read(root, name)
            if not table.empty:
                yield metric, create_convergence_figure(table, metric, value)
    for name in sorted(f for f in files if f.startswith("traces/")):
        yield Path(name).stem, create_drift_figure(_read(root, name))


def render_directory(root):
    """Write one HTML figure per recognised artifact under ``root/figures``.

    Returns:
        list of written file names, relative to ``root``
    """
    manifest = read_manifest(root)
    writer = ArtifactWriter(root)
    for name, fig in _figures_for(root, manifest):
        fig.write_html(writer.target(f"figures/{name}.html"), include_plotlyjs="cdn",
                       div_id=f"figure-{name}")
    logger.info("rendered %d figures for %s", len(writer.files), manifest["command"])
    return writer.files
