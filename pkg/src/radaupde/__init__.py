"""Flipped-Radau direct transcription of 1-D PDE boundary-control problems."""
from .mesh import build_spatial_grid, build_temporal_mesh, uniform_temporal_mesh
from .quadrature import flipped_lgr_rule, standard_lgr_rule
from .transcription import ProblemDefinition, Transcription

__all__ = [
    "ProblemDefinition",
    "Transcription",
    "build_spatial_grid",
    "build_temporal_mesh",
    "flipped_lgr_rule",
    "standard_lgr_rule",
    "uniform_temporal_mesh",
]
__version__ = "0.1.0"
