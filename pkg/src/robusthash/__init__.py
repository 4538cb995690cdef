"""Adversarial attack and defense toolkit for hashing-based retrieval."""

from .hamming import BACKEND as hamming_backend

__version__ = "0.1.0"
__all__ = ["hamming_backend", "__version__"]
