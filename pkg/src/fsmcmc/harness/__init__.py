"""Experiment orchestration: configs, sweep drivers, CSV/figure reports, CLI."""

from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .experiments import CSV_HEADER, ExperimentResult, SweepRow, run_experiment, write_result
from .report import render_figures, render_table
