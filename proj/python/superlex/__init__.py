"""Sparse dictionaries over label-attention token embeddings."""

from ._superlex import *  # noqa: F401,F403
from ._superlex import __doc__  # noqa: F401

__version__ = "0.1.0"
