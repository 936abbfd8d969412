"""Sparse localization of time-harmonic acoustic point sources.

The forward model is a P1 finite-element discretization of the Helmholtz
equation on a rectangle with reflecting and absorbing walls.  Sources are
recovered from microphone readings at a few frequencies by weighted
group-sparse regularization in the space of measures.
"""
from .measure import DiscreteMeasure, PointSourceList
from .mesh import MeshGrid, build_mesh
from .observation import MixingMatrix, WeightTable

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "MeshGrid",
    "MixingMatrix",
    "PointSourceList",
    "WeightTable",
    "build_mesh",
]
