"""Cross-runtime verification harness for exported model sources.

Loads a standalone exported model (numpy-only source file), replays its
reference vectors, and re-checks symmetry/conservation residuals against the
original theory file using an independent minimal reader.  This package never
imports the compiler; it consumes only its published artifacts (model source,
refs JSON, theory files).
"""

__version__ = "0.1.0"

from .checks import ChecksumMismatch, LoadError, ShapeMismatch, recheck_constraints, run_refs
from .thyread import read_theory

__all__ = [
    "ChecksumMismatch",
    "LoadError",
    "ShapeMismatch",
    "read_theory",
    "recheck_constraints",
    "run_refs",
]
