"""SVG court plots of observed and sampled trajectories with a CSV coordinate dump."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .scenes import BALL_TEAM, Scene

PX_PER_M = 20.0
MARGIN = 10.0
TEAM_COLORS = {0: "#1f77b4", 1: "#d62728", BALL_TEAM: "#ff7f0e"}
OTHER_COLOR = "#555555"
CSV_HEADER = ["kind", "sample", "agent", "frame", "x", "y"]


def _color(team: int) -> str:
    return TEAM_COLORS.get(team, OTHER_COLOR)


def _points(xy: np.ndarray, extent) -> str:
    hx, hy = extent[0] / 2, extent[1] / 2
    # SVG y grows downwards
    return " ".join(f"{MARGIN + (x + hx) * PX_PER_M:.3f},{MARGIN + (hy - y) * PX_PER_M:.3f}" for x, y in xy)


def render_svg(scene: Scene, predictions: np.ndarray | None, extent=(28.6, 15.2)) -> str:
    """Observed paths solid, each predicted sample dashed, coloured by team."""
    w = extent[0] * PX_PER_M + 2 * MARGIN
    h = extent[1] * PX_PER_M + 2 * MARGIN
    cx = MARGIN + extent[0] / 2 * PX_PER_M
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" viewBox="0 0 {w:.0f} {h:.0f}">',
        f'<rect x="{MARGIN:.0f}" y="{MARGIN:.0f}" width="{extent[0] * PX_PER_M:.3f}" height="{extent[1] * PX_PER_M:.3f}" fill="none" stroke="#000" stroke-width="2"/>',
        f'<line x1="{cx:.3f}" y1="{MARGIN:.0f}" x2="{cx:.3f}" y2="{h - MARGIN:.3f}" stroke="#000" stroke-width="1"/>',
    ]
    obs = scene.observed
    if predictions is not None:
        for s in range(predictions.shape[0]):
            for a in range(predictions.shape[1]):
                # start each sample at the last observed point so the paths join up
                path = np.concatenate([obs[a, -1:], predictions[s, a]])
                lines.append(
                    f'<polyline points="{_points(path, extent)}" fill="none" stroke="{_color(scene.team_of[a])}" '
                    'stroke-width="1" stroke-dasharray="4 3" stroke-opacity="0.5"/>'
                )
    for a in range(obs.shape[0]):
        lines.append(f'<polyline points="{_points(obs[a], extent)}" fill="none" stroke="{_color(scene.team_of[a])}" stroke-width="2"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def coordinates_csv(scene: Scene, predictions: np.ndarray | None) -> str:
    """Every plotted coordinate as repr floats so the file re-parses exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    obs = scene.observed
    for a in range(obs.shape[0]):
        for f in range(obs.shape[1]):
            writer.writerow(["observed", -1, a, f, repr(float(obs[a, f, 0])), repr(float(obs[a, f, 1]))])
    if predictions is not None:
        for s, a, f in np.ndindex(predictions.shape[:3]):
            writer.writerow(["predicted", s, a, f, repr(float(predictions[s, a, f, 0])), repr(float(predictions[s, a, f, 1]))])
    return buf.getvalue()


def read_coordinates_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverse of :func:`coordinates_csv`: (observed (N, T_obs, 2), predicted (S, N, T, 2) or None)."""
    obs, pred = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["agent"]), int(row["frame"]))
            xy = (float(row["x"]), float(row["y"]))
            if row["kind"] == "observed":
                obs[key] = xy
            else:
                pred[(int(row["sample"]), *key)] = xy

    def dense(table):
        shape = tuple(max(k[i] for k in table) + 1 for i in range(len(next(iter(table))))) + (2,)
        out = np.zeros(shape)
        for k, v in table.items():
            out[k] = v
        return out

    return dense(obs), (dense(pred) if pred else None)


def plot_emit(scene: Scene, predictions, out_path, extent=(28.6, 15.2)) -> tuple[Path, Path]:
    """Write ``out_path`` (SVG) and the same stem with ``.csv``; returns both paths."""
    out = Path(out_path)
    preds = None
    if predictions is not None:
        preds = np.asarray(predictions, dtype=np.float64)
        if preds.size == 0:
            preds = None
    svg_path, csv_path = out, out.with_suffix(".csv")
    svg_path.write_text(render_svg(scene, preds, extent))
    csv_path.write_text(coordinates_csv(scene, preds))
    return svg_path, csv_path
