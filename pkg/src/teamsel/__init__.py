"""Offline selection of statistically reliable ego-agent policies for ad hoc teams."""

from . import bounds, core, envs, model, ope, seldonian
from .errors import (
    ConfigError,
    InsufficientData,
    SupportViolation,
    TeamselError,
    TypeInferenceFailure,
)

__version__ = "0.1.0"

__all__ = [
    "core",
    "envs",
    "model",
    "ope",
    "bounds",
    "seldonian",
    "TeamselError",
    "ConfigError",
    "InsufficientData",
    "SupportViolation",
    "TypeInferenceFailure",
    "__version__",
]
