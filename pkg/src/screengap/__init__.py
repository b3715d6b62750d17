"""Band gaps of periodically screened traps: closed forms and a 2D finite-element lab."""

from .analytic import (
    GapSpec,
    ScreenParams,
    TwoScreenSpec,
    gap_edges,
    hole_radius,
    inverse_design,
    maxwell_gap,
    two_screen_gaps,
)
from .assembly import BoundaryRegime, OperatorPair, assemble, rayleigh_quotient
from .bands import (
    BandStructure,
    ConvergenceStudy,
    MeshPolicy,
    converge_study,
    dirichlet_floor,
    limit_spectra,
    sweep_bands,
)
from .capacity import ApertureProfile, CapacityResult, aperture_profile_2d, ball_capacity, disc_capacity
from .eigen import EigenResult, smallest_eigs
from .errors import BudgetError, ConsistencyError, GeometryError, NumericalError, ParameterError, ScreenGapError
from .mesh import CellGeometry, CellMesh, build_cell_mesh, validate_mesh

__version__ = "0.1.0"

__all__ = [
    "ApertureProfile",
    "BandStructure",
    "BoundaryRegime",
    "BudgetError",
    "CapacityResult",
    "CellGeometry",
    "CellMesh",
    "ConsistencyError",
    "ConvergenceStudy",
    "EigenResult",
    "GapSpec",
    "GeometryError",
    "MeshPolicy",
    "NumericalError",
    "OperatorPair",
    "ParameterError",
    "ScreenGapError",
    "ScreenParams",
    "TwoScreenSpec",
    "aperture_profile_2d",
    "assemble",
    "ball_capacity",
    "build_cell_mesh",
    "converge_study",
    "dirichlet_floor",
    "disc_capacity",
    "gap_edges",
    "hole_radius",
    "inverse_design",
    "limit_spectra",
    "maxwell_gap",
    "rayleigh_quotient",
    "smallest_eigs",
    "sweep_bands",
    "two_screen_gaps",
    "validate_mesh",
]
