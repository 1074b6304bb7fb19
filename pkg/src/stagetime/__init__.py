"""stagetime: hierarchical multi-stage transformer for multivariate
time-series classification, built from scratch on numpy."""

__version__ = "0.1.0"

from .backend import BACKEND

__all__ = ["BACKEND", "__version__"]
