"""
Exception types raised by EGPrune.

Every error derives from `EGPError`, itself a `ValueError`, so code that only
cares about invalid input can keep catching `ValueError`.
"""

from typing import Optional


class EGPError(ValueError):
    """Base class for all EGPrune errors."""


class ShapeError(EGPError):
    """A tensor or layer shape is incompatible with the operation."""


class ConfigError(EGPError):
    """
    An experiment configuration value is missing or out of range.

    Parameters
    ----------
    field : str
        Dotted path of the offending field, e.g. ``"prune.zeta"``.
    message : str
        Human readable description of the problem.
    """

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class BudgetError(EGPError):
    """A pruning budget cannot be honored by the available parameters."""


class PlanError(EGPError):
    """A structural edit plan does not match the network it is applied to."""


class IDXFormatError(EGPError):
    """An IDX file is malformed or of an unsupported type."""


class EmptyDatasetError(EGPError):
    """An operation that needs samples received none."""


class NoDataObservedError(EGPError):
    """Activation statistics were queried before any sample was seen."""


class NonFiniteGradientError(EGPError):
    """
    A gradient contains NaN or Inf.

    Parameters
    ----------
    layer_index : int
        Index of the layer whose gradient is not finite.
    parameter : str
        Either ``"weights"`` or ``"bias"``.
    """

    def __init__(self, layer_index: int, parameter: str, detail: Optional[str] = None) -> None:
        self.layer_index = layer_index
        self.parameter = parameter
        msg = f"Non-finite gradient for {parameter} of layer {layer_index}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


__all__ = [
    "EGPError",
    "ShapeError",
    "ConfigError",
    "BudgetError",
    "PlanError",
    "IDXFormatError",
    "EmptyDatasetError",
    "NoDataObservedError",
    "NonFiniteGradientError",
]
