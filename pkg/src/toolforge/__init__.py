"""Causal tool-feature discovery and tool selection.

Modules: ``geometry`` (parts, sampling, Chamfer), ``editor`` (semantic
feature edits), ``tasks`` (simulated pull, scoop and step tasks),
``discovery`` (causal features and working ranges), ``matcher`` (morph
matching, classification, keypoint transfer), ``suggester`` (candidate
features) and ``pipeline``/``cli`` (staged runs).
"""
from .nn import BACKEND as NN_BACKEND

__version__ = "0.1.0"

__all__ = ["NN_BACKEND", "__version__"]
