"""Token dynamics of selective state-space (S6) layers."""
from ._core import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
