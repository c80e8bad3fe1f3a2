"""Coupled temperature / electric potential / displacement simulator.

2D P1 finite elements for a heat-generating electrical device in frictional
contact: a parabolic heat balance with Joule and frictional sources, an
elliptic current conservation law, and a viscoelastic momentum balance with
a velocity-dependent friction coefficient. The three fields are decoupled in
time by evaluating every coupling term a fixed lag h in the past, and the
heat equation carries an h-weighted 4-Laplacian regularizer that vanishes
with the lag.
"""

from .mesh import (
    DofMap,
    Mesh,
    MeshError,
    build_dof_maps,
    build_unit_square_mesh,
    estimate_scalar_trace_norm,
    estimate_trace_norm,
    load_mesh,
)

__all__ = [
    "Mesh",
    "DofMap",
    "MeshError",
    "load_mesh",
    "build_unit_square_mesh",
    "build_dof_maps",
    "estimate_trace_norm",
    "estimate_scalar_trace_norm",
]

__version__ = "0.1.0"
