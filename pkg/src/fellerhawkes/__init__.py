"""Near-critical Hawkes processes: simulation, scaling limits and Riccati-type equations."""

from .grid_measures import Grid, GridFunction, GridMeasure
from .kernels import (
    Deterministic,
    Empirical,
    Exponential,
    GIDTriplet,
    MittagLeffler,
    Pareto,
    Periodic,
    RowConstant,
    Scaled,
    discretize_kernel,
    geometric_mixture,
)
from .riccati import RiccatiProblem, solve_marching, solve_picard, solve_series
from .simulator import HawkesParams, sample_cluster, sample_hawkes

__all__ = [
    "Grid", "GridFunction", "GridMeasure",
    "Deterministic", "Empirical", "Exponential", "GIDTriplet", "MittagLeffler", "Pareto",
    "Periodic", "RowConstant", "Scaled", "discretize_kernel", "geometric_mixture",
    "RiccatiProblem", "solve_marching", "solve_picard", "solve_series",
    "HawkesParams", "sample_cluster", "sample_hawkes",
]
