"""Figure rendering for result tables.

Sweep experiments get one line chart per metric (series per dataset,
seeds averaged); point experiments get one grouped bar chart per metric
over (model, dataset). Files land under <out>/figures/ next to the
delimited output.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

import numpy as np

from fuselab.experiments.emit import table_to_plotseries
from fuselab.experiments.runner import ResultTable


def _mean_series(series: list[dict]) -> dict[tuple[str, str], tuple[list, list]]:
    """Average y over seeds per (metric, dataset) on the common x grid."""
    grouped: dict[tuple[str, str], list[dict]] = defaultdict(list)
    for s in series:
        grouped[(s["metric"], s["dataset_id"])].append(s)
    out = {}
    for key, members in grouped.items():
        x = members[0]["x"]
        ys = np.array([m["y"] for m in members if m["x"] == x])
        out[key] = (x, ys.mean(axis=0).tolist())
    return out


def _render_sweeps(series: list[dict], out: Path, prefix: str) -> list[Path]:
    by_metric: dict[str, dict[str, tuple[list, list]]] = defaultdict(dict)
    for (metric, dataset_id), (x, y) in _mean_series(series).items():
        by_metric[metric][dataset_id] = (x, y)
    paths = []
    for metric, curves in sorted(by_metric.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        for dataset_id, (x, y) in sorted(curves.items()):
            ax.plot(x, y, marker="o", markersize=3, label=dataset_id)
        ax.set_xlabel("interpolation coefficient")
        ax.set_ylabel(metric)
        ax.set_title(f"{prefix}: {metric}")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        path = out / f"{prefix}_{metric}.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths


def _render_bars(table: ResultTable, out: Path, prefix: str) -> list[Path]:
    by_metric: dict[str, dict[tuple[str, str], list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in table.rows:
        if row.coord is not None or ":" in row.metric:
            continue
        by_metric[row.metric][(row.point_id, row.dataset_id)].append(row.value)
    paths = []
    for metric, cells in sorted(by_metric.items()):
        points = sorted({p for p, _ in cells})
        datasets = sorted({d for _, d in cells})
        fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(points)), 4))
        width = 0.8 / max(1, len(datasets))
        xs = np.arange(len(points))
        for j, dataset_id in enumerate(datasets):
            heights = [np.mean(cells.get((p, dataset_id), [np.nan])) for p in points]
            ax.bar(xs + j * width, heights, width, label=dataset_id)
        ax.set_xticks(xs + 0.4 - width / 2)
        ax.set_xticklabels(points, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(metric)
        ax.set_title(f"{prefix}: {metric}")
        ax.grid(True, axis="y", alpha=0.3)
        ax.legend(fontsize=8)
        path = out / f"{prefix}_{metric}.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths


def render_figures(table: ResultTable, out_dir: str | Path) -> list[Path]:
    """Render every metric of the table to PNG files; returns the paths."""
    if not table.rows:
        raise ValueError("cannot render an empty table")
    out = Path(out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    prefix = table.provenance.get("config", {}).get("kind", "experiment")
    sweep_series = table_to_plotseries(table)["series"]
    if sweep_series:
        return _render_sweeps(sweep_series, out, prefix)
    return _render_bars(table, out, prefix)
