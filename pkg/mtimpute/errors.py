"""Exception types raised by mtimpute."""

from typing import Optional


class ImputationError(Exception):
    """Base class for every error mtimpute raises on purpose."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class StructuralError(ImputationError):
    """Shapes, dimensions or call order do not line up."""


class NumericalError(ImputationError):
    """A computation produced NaN or Inf."""

    def __init__(self, detail: str, layer: Optional[int] = None):
        super().__init__(detail)
        self.layer = layer


class DatasetError(ImputationError):
    """A dataset could not be loaded or violates its catalog entry."""


class MissingnessError(ImputationError):
    """A missingness mechanism cannot run on the given dataset or parameters."""


class ConfigError(ImputationError):
    """An experiment or imputation configuration is invalid."""
