"""Flat-output singularity analysis and chart-switching route planning."""

from .atlas import Atlas, Chart, Classification, car_atlas, classify_point, compatibility_check, select_chart
from .implicit_system import ImplicitSystem, JetPoint, car_system, chain2_system, p_matrix
from .orepoly import OreMatrix, OrePoly, hyper_regular_locus, smith_jacobson, unimodular_check
from .planner import RouteSpec, plan_route, validate_closed_loop

__version__ = "0.1.0"
