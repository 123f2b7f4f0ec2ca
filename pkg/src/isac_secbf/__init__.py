"""Secure ISAC beamforming designs: fully digital FP/SDR optimization with
sensing-beam rank reduction, penalty-manifold hybrid beamforming, a MUSIC
sensing loop, and an experiment harness."""

from . import bench, channel, conic, estimators, fp_digital, had, metrics, scenario
from .scenario import ScenarioConfig, load_scenario, make_rng

__all__ = [
    "bench",
    "channel",
    "conic",
    "estimators",
    "fp_digital",
    "had",
    "metrics",
    "scenario",
    "ScenarioConfig",
    "load_scenario",
    "make_rng",
]

__version__ = "0.1.0"
