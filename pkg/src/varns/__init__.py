"""Space-time variational solver for the 2-D periodic heat and Navier-Stokes equations."""

__version__ = "0.1.0"

from .flux import FluxModel, flux_membership_check
from .functional import FunctionalSpec, evaluate, first_variation_report, gradient
from .grid import Grid, SpaceTimeField, TimeGrid, inv_laplacian, leray_project, project_admissible
from .lift import collocated_lift, stokes_lift
from .minimize import MinimizeConfig, certify_solution, minimize
from .oracle import AnalyticCase, compare, reference_solve

__all__ = [
    "AnalyticCase", "FluxModel", "FunctionalSpec", "Grid", "MinimizeConfig", "SpaceTimeField", "TimeGrid",
    "certify_solution", "collocated_lift", "compare", "evaluate", "first_variation_report",
    "flux_membership_check", "gradient", "inv_laplacian", "leray_project", "minimize",
    "project_admissible", "reference_solve", "stokes_lift",
]
