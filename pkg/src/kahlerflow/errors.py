"""Exception hierarchy and warning categories for kahlerflow."""

from __future__ import annotations


class KahlerFlowError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(KahlerFlowError):
    """A run configuration is syntactically or semantically invalid."""


class GeometryError(KahlerFlowError):
    """A geometric quantity left its admissible range (e.g. a metric
    eigenvalue became nonpositive).

    Parameters
    ----------
    message:
        Human-readable description.
    node:
        Optional grid index at which the violation was detected.
    """

    def __init__(self, message: str, node: int | None = None):
        if node is not None:
            message = f"{message} (grid node {node})"
        super().__init__(message)
        self.node = node


class FitError(KahlerFlowError):
    """A rate fit could not be performed on the given samples."""


class AccuracyWarning(UserWarning):
    """A computed quantity is returned but its accuracy is degraded
    (e.g. curvature assembly near the edge of resolution)."""
