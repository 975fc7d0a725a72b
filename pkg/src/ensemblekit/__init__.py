"""Classifier-agnostic ensembling over prediction-score tables.

Split a labelled sample manifest, balance classes with mirror flips,
validate per-classifier prediction files, and combine them by weighted
or majority voting, including exhaustive quantized weight search.
"""

from .errors import EnsemblekitError, StorageError, ValidationError

__version__ = "0.1.0"

__all__ = ["EnsemblekitError", "StorageError", "ValidationError", "__version__"]
