"""Incremental approximate dynamic programming for model-free manipulator tracking.

Per joint, a time-delay estimate removes the unknown dynamics, a feedforward
inversion turns tracking into regulation, and a small critic learns the value
function online from realtime and replayed data to shape a saturated policy.
"""
from . import _backend
from .config import load_config, resolve
from .harness import run_experiment

__version__ = "0.1.0"

backend = _backend.name

__all__ = ["load_config", "resolve", "run_experiment", "backend", "__version__"]
