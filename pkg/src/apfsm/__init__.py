"""Verification toolkit for autonomous probabilistic finite-state machines."""
from .errors import AnalysisError, ModelError
from .language import load_model, parse_model, print_model, read_model, validate
from .statespace import BuildMode, build, classify_terminals

__version__ = "0.1.0"

__all__ = [
    "AnalysisError",
    "BuildMode",
    "ModelError",
    "build",
    "classify_terminals",
    "load_model",
    "parse_model",
    "print_model",
    "read_model",
    "validate",
]
