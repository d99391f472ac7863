"""Adaptive FEM solver for elastic scattering by biperiodic rigid surfaces.

The solver couples linear tetrahedral finite elements on the truncated
cell with a transparent boundary condition built from a truncated
Dirichlet-to-Neumann (DtN) map on the Rayleigh modes, and drives mesh
refinement with a residual-type a posteriori estimator that also
accounts for the DtN truncation error.
"""

from .spectral import (Medium, Incidence, Lattice, ModeData,
                       HelmholtzCoeffs, EfficiencyTable, WoodAnomalyError,
                       make_medium, make_incidence, mode, efficiencies)
from .mesh import (SurfaceProfile, Mesh, flat_profile, bump_profile,
                   heightmap_profile, build_mesh, refine, write_vtk)
from .fem import DofMap, Field, build_dofmap, h1_error
from .dtn import ModeGrid, BoundarySpectrum, make_mode_grid, fourier_trace
from .solver import SolveResult, solve
from .estimator import ErrorEstimate, indicators
from .adapt import AdaptRecord, AdaptResult, choose_n_trunc, run

__all__ = [
    "Medium", "Incidence", "Lattice", "ModeData", "HelmholtzCoeffs",
    "EfficiencyTable", "WoodAnomalyError", "make_medium", "make_incidence",
    "mode", "efficiencies",
    "SurfaceProfile", "Mesh", "flat_profile", "bump_profile",
    "heightmap_profile", "build_mesh", "refine", "write_vtk",
    "DofMap", "Field", "build_dofmap", "h1_error",
    "ModeGrid", "BoundarySpectrum", "make_mode_grid", "fourier_trace",
    "SolveResult", "solve",
    "ErrorEstimate", "indicators",
    "AdaptRecord", "AdaptResult", "choose_n_trunc", "run",
]

__version__ = "0.1.0"
