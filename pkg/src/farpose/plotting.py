"""Static line-plot figures (SVG) for training logs, metric reports and trajectories."""

from __future__ import annotations

import csv
import io
import re

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "svg.hashsalt": "farpose",
    "svg.fonttype": "none",
    "path.simplify": False,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
}

KINDS = ("loss", "metrics", "trajectory")


def read_csv(path_or_text):
    if "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        return list(csv.DictReader(fh))


def report_kind(rows):
    if not rows:
        raise ValueError("report has no rows")
    cols = set(rows[0])
    if {"iter", "total"} <= cols:
        return "loss"
    if {"frame", "pred_x", "gt_x"} <= cols:
        return "trajectory"
    if {"frame", "pa_mpjpe_mm"} <= cols:
        return "metrics"
    raise ValueError(f"unrecognized report columns: {sorted(cols)}")


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _by_hand(rows):
    groups = {}
    for r in rows:
        groups.setdefault(r.get("hand", "all"), []).append(r)
    return sorted(groups.items())


def plot_loss(rows, path):
    """Total training loss against iteration; one point per log row."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot([int(r["iter"]) for r in rows], [float(r["total"]) for r in rows],
                color="0.2", label="total", gid="series-total")
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.set_yscale("log")
        fig.tight_layout()
        _save(fig, path)
    return len(rows)


def plot_metrics(rows, path, column="pa_mpjpe_mm"):
    """Per-frame metric, one line per hand."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        n = 0
        for name, grp in _by_hand(rows):
            ax.plot([int(r["frame"]) for r in grp], [float(r[column]) for r in grp], label=name,
                    gid=f"series-{name}")
            n += len(grp)
        ax.set_xlabel("frame")
        ax.set_ylabel(column.replace("_", " "))
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)
    return n


def plot_trajectory(rows, path):
    """Predicted and ground-truth wrist height and ground track, per hand."""
    with plt.rc_context(STYLE):
        fig, (ax_xy, ax_z) = plt.subplots(1, 2, figsize=(8, 3.2))
        n = 0
        for name, grp in _by_hand(rows):
            px = [float(r["pred_x"]) for r in grp]
            py = [float(r["pred_y"]) for r in grp]
            gx = [float(r["gt_x"]) for r in grp]
            gy = [float(r["gt_y"]) for r in grp]
            fr = [int(r["frame"]) for r in grp]
            line = ax_xy.plot(px, py, label=f"{name} predicted", gid=f"series-{name}-pred-xy")[0]
            col = line.get_color()
            ax_xy.plot(gx, gy, "--", color=col, label=f"{name} ground truth",
                       gid=f"series-{name}-gt-xy")
            ax_z.plot(fr, [float(r["pred_z"]) for r in grp], color=col, gid=f"series-{name}-pred-z")
            ax_z.plot(fr, [float(r["gt_z"]) for r in grp], "--", color=col, gid=f"series-{name}-gt-z")
            n += len(grp)
        ax_xy.set_xlabel("x (m)")
        ax_xy.set_ylabel("y (m)")
        ax_xy.set_aspect("equal", adjustable="datalim")
        ax_xy.legend(frameon=False, fontsize=7)
        ax_z.set_xlabel("frame")
        ax_z.set_ylabel("wrist height (m)")
        fig.tight_layout()
        _save(fig, path)
    return n


def count_series_points(svg_text):
    """Vertices per data series in an SVG written by this module."""
    out = {}
    for gid, body in re.findall(r'<g id="(series-[^"]+)">(.*?)</g>', svg_text, flags=re.S):
        d = re.search(r' d="([^"]*)"', body)
        out[gid] = len(re.findall(r"[ML]", d.group(1))) if d else 0
    return out


def plot_report(path_or_text, out):
    """Pick the figure type from the CSV columns; returns (kind, rows plotted)."""
    rows = read_csv(path_or_text)
    kind = report_kind(rows)
    fn = {"loss": plot_loss, "metrics": plot_metrics, "trajectory": plot_trajectory}[kind]
    return kind, fn(rows, out)
