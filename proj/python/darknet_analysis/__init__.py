"""Darknet scanner profiling toolkit: feature encodings, autoencoder
embeddings, k-means with validity metrics, interpretation trees and
EMD-based day-over-day change detection."""

try:
    from ._core import *  # noqa: F401,F403  (installed package layout)
    from ._core import __version__  # noqa: F401
except ImportError:  # in-tree builds put _core next to the package
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
