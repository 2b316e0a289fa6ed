"""Information-theoretic quantum dynamics: measures, actions, evolution and axiom checks."""

from infoqm.errors import (
    AxiomError,
    CheckpointError,
    DensityFloorError,
    InfoQMError,
    NonConvergenceError,
    NumericalFailure,
    ScenarioError,
)
from infoqm.grid import (
    ComplexField,
    Grid,
    GridSpec,
    Metric,
    RealField,
    derivative,
    integrate,
    make_grid,
    rotate_field,
)

__version__ = "0.1.0"

__all__ = [
    "AxiomError",
    "CheckpointError",
    "ComplexField",
    "DensityFloorError",
    "Grid",
    "GridSpec",
    "InfoQMError",
    "Metric",
    "NonConvergenceError",
    "NumericalFailure",
    "RealField",
    "ScenarioError",
    "derivative",
    "integrate",
    "make_grid",
    "rotate_field",
]
