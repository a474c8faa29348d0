"""The ``.apfsm`` modelling language."""
from pathlib import Path

from .check import validate
from .printer import print_model, print_source, to_source
from .syntax import Diagnostic, DiagnosticError, ModelSource, parse_model

__all__ = [
    "Diagnostic",
    "DiagnosticError",
    "ModelSource",
    "load_model",
    "parse_model",
    "print_model",
    "print_source",
    "read_model",
    "to_source",
    "validate",
]


def load_model(text: str):
    """Parse and validate in one go."""
    return validate(parse_model(text))


def read_model(path):
    return load_model(Path(path).read_text(encoding="utf-8"))
