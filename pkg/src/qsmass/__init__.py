"""Curvature flows, quasi-spherical lapse construction and mass diagnostics
for star-shaped hypersurfaces of Euclidean space."""

from .errors import (
    AssumptionViolation,
    BoundViolation,
    ConeViolation,
    ConfigError,
    DomainError,
    GlueMismatch,
    GridError,
    LinearSolveError,
    NotConvex,
    QSMassError,
    StarShapeLost,
    StepUnderflow,
)
from .grid import SphereGrid, MetricField, build_grid, laplacian_operator
from .surface import RadialSurface, LeafGeometry, ellipsoid, forms_from_radial, radial_perturbation, sphere
from .flow import AdmissibleCone, cone_check, f_speed, run_flow
from .foliation import FoliationRecord, concatenate, foliate_distance, foliate_from_flow, validate
from .quasispherical import Bounds, apriori_bounds, initial_lapse, solve
from .mass import adm_estimate, brown_york, mass_function, monotonicity_report

__version__ = "0.1.0"
