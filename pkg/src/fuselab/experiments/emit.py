"""Result emission: lossless CSV/JSON renderings of a ResultTable and the
plot-ready series grouping (x = sweep coordinate, y = metric, one series
per dataset)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from fuselab.experiments.runner import ResultTable

FORMATS = ("csv", "json", "plotseries")


def table_to_plotseries(table: ResultTable) -> dict:
    """Group sweep rows into per-(metric, dataset, seed) series with
    ascending x."""
    series: dict[tuple[str, str, int], list[tuple[float, float]]] = {}
    for row in table.rows:
        if row.coord is None or ":" in row.metric:
            continue
        series.setdefault((row.metric, row.dataset_id, row.seed), []).append((row.coord, row.value))
    out = []
    for (metric, dataset_id, seed), points in sorted(series.items()):
        points.sort(key=lambda p: p[0])
        out.append(
            {
                "metric": metric,
                "dataset_id": dataset_id,
                "seed": seed,
                "x": [p[0] for p in points],
                "y": [p[1] for p in points],
            }
        )
    return {"provenance": table.provenance, "series": out}


def emit(table: ResultTable, fmt: str, out_dir: str | Path) -> list[Path]:
    """Write the table in one format; returns the created paths."""
    if not table.rows:
        raise ValueError("cannot emit an empty table")
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []
    if fmt == "json":
        path = out / "results.json"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(table.to_json())
        created.append(path)
    elif fmt == "csv":
        path = out / "results.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["point_id", "metric", "dataset_id", "value", "seed", "coord"])
            for row in table.rows:
                writer.writerow(
                    [
                        row.point_id,
                        row.metric,
                        row.dataset_id,
                        repr(row.value),
                        row.seed,
                        "" if row.coord is None else repr(row.coord),
                    ]
                )
        created.append(path)
        if table.errors:
            err_path = out / "errors.csv"
            with open(err_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["seed", "stage", "message"])
                for err in table.errors:
                    writer.writerow([err.seed, err.stage, err.message])
            created.append(err_path)
    else:
        path = out / "plotseries.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(table_to_plotseries(table), fh, sort_keys=True)
            fh.write("\n")
        created.append(path)
    return created


def load_table(path: str | Path) -> ResultTable:
    with open(path, encoding="utf-8") as fh:
        return ResultTable.from_dict(json.load(fh))
