"""Drift-adaptive online gradient descent for a two-modality late-fusion classifier."""

from .core import Batch, ConfigError, ControllerConfig, FusionWeight, Sample, StepRecord
from .harness import HarnessConfig, run_experiment, run_phase1, run_phase2
from .model import ModelState
from .stream import StreamConfig

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "ConfigError",
    "ControllerConfig",
    "FusionWeight",
    "HarnessConfig",
    "ModelState",
    "Sample",
    "StepRecord",
    "StreamConfig",
    "run_experiment",
    "run_phase1",
    "run_phase2",
]
