"""Experiment runner: configs, named experiments, reports and the CLI."""

from reconlab.harness.config import EXPERIMENTS, ExperimentConfig, derive_rng, derive_seed, validate
from reconlab.harness.runner import ExperimentReport, run

__all__ = ["EXPERIMENTS", "ExperimentConfig", "ExperimentReport", "derive_rng", "derive_seed", "run", "validate"]
