"""Exception hierarchy shared across the compiler pipeline."""

from __future__ import annotations


class TheorycError(Exception):
    """Base class for all errors raised by this package."""

    code = "Error"


class TheorySyntaxError(TheorycError):
    """Malformed theory source; carries a 1-based source position."""

    code = "SyntaxError"

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class DuplicateNameError(TheorySyntaxError):
    code = "DuplicateName"


class UnknownKindError(TheorySyntaxError):
    code = "UnknownKind"


class UnknownPrimitiveError(TheorySyntaxError):
    """A relation refers to a primitive that was never declared."""

    code = "UnknownPrimitive"


class CheckError(TheorycError):
    """Well-formedness failure; carries the full diagnostic list."""

    code = "CheckFailed"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(f"{d.code}: {d.detail}" for d in self.diagnostics)
        super().__init__(lines or "ill-formed theory")


class GroupOrderCapExceededError(TheorycError):
    code = "GroupOrderCapExceeded"


class NonBijectiveGeneratorError(TheorycError):
    code = "NonBijectiveGenerator"


class CompileError(TheorycError):
    code = "CompileError"


class UnsupportedPrimitiveError(CompileError):
    code = "UnsupportedPrimitive"


class UnsupportedPairError(CompileError):
    """Primitive combination with no sound joint compilation rule."""

    code = "UnsupportedPair"


class MissingWitnessError(CompileError):
    """Composition needs a compatibility witness that was not supplied."""

    code = "MissingWitness"


class DimensionMismatchError(TheorycError):
    code = "DimensionMismatch"


class ShapeMismatchError(TheorycError):
    code = "ShapeMismatch"


class NonFiniteValueError(TheorycError):
    """A NaN or Inf surfaced during evaluation; never silently propagated."""

    code = "NonFiniteValue"

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message)
        self.node_id = node_id


class ProvenanceMismatchError(TheorycError):
    """Graph and theory do not describe the same compilation."""

    code = "ProvenanceMismatch"


class UnsupportedTargetError(TheorycError):
    code = "UnsupportedTarget"
