"""Declarative experiment configs, the seed-parallel runner, result
emission (csv/json/plotseries), and figure rendering."""

from fuselab.experiments.config import ExperimentConfig, EXPERIMENT_KINDS
from fuselab.experiments.runner import ResultRow, ResultTable, RunError, run
from fuselab.experiments.emit import emit
from fuselab.experiments.plots import render_figures

__all__ = [
    "ExperimentConfig",
    "EXPERIMENT_KINDS",
    "ResultRow",
    "ResultTable",
    "RunError",
    "run",
    "emit",
    "render_figures",
]
