"""Benchmark harness: datasets, calibration runs, scoring, charts, reports and the CLI."""

from simcal.harness.config import RunSpec, load_config, loads_config
from simcal.harness.data import Dataset, gen_data, load_dataset, loads_dataset, write_dataset
from simcal.harness.plot import read_plot_values, radar_plot
from simcal.harness.report import make_report, parse_report
from simcal.harness.runner import Cell, ScoreReport, load_run, run_calibration, run_transfer

__all__ = [
    "Cell",
    "Dataset",
    "RunSpec",
    "ScoreReport",
    "gen_data",
    "load_config",
    "load_dataset",
    "loads_config",
    "loads_dataset",
    "make_report",
    "parse_report",
    "read_plot_values",
    "run_calibration",
    "run_transfer",
    "radar_plot",
    "write_dataset",
]
