"""Nearest-neighbour backend selection.

The compiled kd-tree (``toolforge._kdtree``) is used when it was built;
otherwise the numpy fallback is loaded. Set ``TOOLFORGE_PURE_PYTHON=1``
to force the fallback.
"""
import os

from . import _nn_py

BACKENDS = {"python": _nn_py.KDTree}

try:
    from ._kdtree import KDTree as _CompiledKDTree
except ImportError:  # extension not built
    _CompiledKDTree = None
else:
    BACKENDS["cython"] = _CompiledKDTree

if _CompiledKDTree is not None and os.environ.get("TOOLFORGE_PURE_PYTHON") != "1":
    BACKEND = "cython"
else:
    BACKEND = "python"

KDTree = BACKENDS[BACKEND]


def build_index(points, backend=None):
    """Build a nearest-neighbour index over an ``(n, 3)`` array."""
    cls = KDTree if backend is None else BACKENDS[backend]
    return cls(points)
