"""Simulation and numerics for multitype critical branching particle systems
with heavy-tailed lifetimes and stable motion."""
from .config import ExperimentConfig, load_config, preset, preset_model
from .errors import BranchsimError
from .lifetimes import Exponential, LightPareto, ParetoTail, Weibull
from .model import ModelSpec, classify_regime, critical_dimensions, spectral
from .offspring import ExplicitOffspring, FactorizedOffspring

__version__ = "0.1.0"

__all__ = [
    "BranchsimError",
    "ExperimentConfig",
    "ExplicitOffspring",
    "Exponential",
    "FactorizedOffspring",
    "LightPareto",
    "ModelSpec",
    "ParetoTail",
    "Weibull",
    "classify_regime",
    "critical_dimensions",
    "load_config",
    "preset",
    "preset_model",
    "spectral",
]
