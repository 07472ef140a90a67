"""kolmobox: periodic-box solver and verification suite for a two-equation
turbulence closure with an r-Laplacian regularization."""

from .errors import (
    BadDelta,
    DegenerateOmega,
    IncompatibleGrid,
    InsufficientSamples,
    KolmoboxError,
    NegativeCoefficient,
    NonpositiveParameter,
    NonpositiveSample,
    NonpositiveSamples,
    ParseError,
    PicardDiverged,
    StepRejected,
    ValidationError,
)
from .fields import Grid, ScalarField, SymTensorField, VectorField
from .model import ComparisonEnvelope, HomogeneousIC, ModelParams, State
from .timestepper import StepConfig, Trajectory

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "SymTensorField",
    "ModelParams",
    "ComparisonEnvelope",
    "State",
    "HomogeneousIC",
    "StepConfig",
    "Trajectory",
    "KolmoboxError",
    "NegativeCoefficient",
    "DegenerateOmega",
    "IncompatibleGrid",
    "StepRejected",
    "PicardDiverged",
    "InsufficientSamples",
    "NonpositiveSamples",
    "BadDelta",
    "NonpositiveParameter",
    "NonpositiveSample",
    "ParseError",
    "ValidationError",
    "__version__",
]
