"""
Exception hierarchy for treeprobe.

Argument faults also subclass ValueError so callers that only know the
standard library still catch them.
"""

from typing import Optional


class TreeProbeError(Exception):
    """Root of every error raised by treeprobe."""


class InvalidTreeError(TreeProbeError, ValueError):
    """Edge list is not a tree on 1..n, a weight is non-positive, or n is invalid."""


class InvalidVertexError(TreeProbeError, ValueError):
    """Vertex id outside 1..n."""

    def __init__(self, vertex: object, n: int):
        super().__init__(f"vertex id {vertex!r} outside 1..{n}")
        self.vertex = vertex
        self.n = n


class WeightDomainError(TreeProbeError, ValueError):
    """Correlation cannot be mapped to a positive edge weight."""


class InfiniteDistanceError(WeightDomainError):
    """rho = 0: the two variables are independent, distance diverges."""


class ZeroWeightError(WeightDomainError):
    """|rho| = 1: the edge would have length zero (contraction unsupported)."""


class PreconditionError(TreeProbeError, ValueError):
    """An operation was called outside its documented precondition."""


class InvalidSpecError(TreeProbeError, ValueError):
    """TestSpec parameters out of range."""


class SizingError(TreeProbeError, ValueError):
    """A sample-size rule produced a size the statistic cannot use."""


class RecoveryError(TreeProbeError):
    """Queried distances are inconsistent with a tree metric."""


class SerializationError(TreeProbeError, ValueError):
    """Malformed tree or subtree text."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ConfigValidationError(TreeProbeError, ValueError):
    """Experiment configuration rejected; carries field / line diagnostics."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        parts = []
        if line is not None:
            parts.append(f"line {line}")
        if field:
            parts.append(f"field '{field}'")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.field = field
        self.line = line


class OutputWriteError(TreeProbeError):
    """A result file could not be written or failed verification."""
