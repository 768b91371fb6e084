"""Attracting cylinders of linear systems under bounded disturbances."""

from importlib.metadata import PackageNotFoundError, version

from .analysis import (
    AttractingCylinderResult,
    DisturbedSystem,
    check_output_regularity,
    find_attracting_cylinder,
    certificate_block,
    verify_cylinder,
)
from .cylinder import Cylinder, ProjectionShape, ShapeKind, image, project_to_plane
from .errors import (
    CylinderError,
    DimensionError,
    DivergedError,
    InfeasibleError,
    InvalidInputError,
    LmiStructureError,
    NotPSDError,
    NotRealizableError,
    RankError,
    StructuralError,
    UnboundedError,
)
from .simulation import SignalSpec, membership_series, simulate
from .synthesis import (
    ControllerParams,
    PlantModel,
    ReferenceModel,
    SynthesisProblem,
    closed_loop,
    synthesize,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "AttractingCylinderResult",
    "ControllerParams",
    "Cylinder",
    "CylinderError",
    "DimensionError",
    "DisturbedSystem",
    "DivergedError",
    "InfeasibleError",
    "InvalidInputError",
    "LmiStructureError",
    "NotPSDError",
    "NotRealizableError",
    "PlantModel",
    "ProjectionShape",
    "RankError",
    "ReferenceModel",
    "ShapeKind",
    "SignalSpec",
    "StructuralError",
    "SynthesisProblem",
    "UnboundedError",
    "check_output_regularity",
    "closed_loop",
    "find_attracting_cylinder",
    "image",
    "membership_series",
    "project_to_plane",
    "simulate",
    "synthesize",
    "certificate_block",
    "verify_cylinder",
]
