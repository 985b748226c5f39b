"""Phase-field brittle fracture with an optimised regularisation length."""

from .model import MaterialParams

__version__ = "0.1.0"
__all__ = ["MaterialParams"]
