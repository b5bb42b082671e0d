"""Dirac operators, heat invariants and Finsler data for matrix-valued geometries on tori."""

__version__ = "0.1.0"

from .clifford import GammaRep, build_gamma_rep, clifford_expand, spin_exp, vector_rep
from .errors import (
    BranchAnomalyWarning,
    ConfigError,
    DegenerateBranch,
    DimensionCapExceeded,
    EllipticityError,
    InputError,
    LineSearchStall,
    MetricError,
    NCGeomError,
    NonPositiveEta,
    ParityError,
    QuadratureDivergence,
    SchemaError,
    SingularAMap,
    ThresholdAmbiguity,
    WindowWarning,
)
from .fields import NCFields, build_deformation, gauge_transform, spin_connection_B
from .grid import TorusGrid
from .heat import QuadratureSpec, a0_density, a1_density, global_invariants
from .riemann import MetricField, conformal_metric, flat_metric

__all__ = [
    "BranchAnomalyWarning",
    "ConfigError",
    "DegenerateBranch",
    "DimensionCapExceeded",
    "EllipticityError",
    "GammaRep",
    "InputError",
    "LineSearchStall",
    "MetricError",
    "MetricField",
    "NCFields",
    "NCGeomError",
    "NonPositiveEta",
    "ParityError",
    "QuadratureDivergence",
    "QuadratureSpec",
    "SchemaError",
    "SingularAMap",
    "ThresholdAmbiguity",
    "TorusGrid",
    "WindowWarning",
    "a0_density",
    "a1_density",
    "build_deformation",
    "build_gamma_rep",
    "clifford_expand",
    "conformal_metric",
    "flat_metric",
    "gauge_transform",
    "global_invariants",
    "spin_connection_B",
    "spin_exp",
    "vector_rep",
]
