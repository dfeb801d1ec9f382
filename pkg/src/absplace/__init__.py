"""Aerial base station placement over radio maps with group-sparse ADMM."""

from .baselines import OracleResult, brute_force_min_abs, kmeans_placement
from .geometry import (Building, EmptyFlightGridError, Grid3, Region, SpatialLossField,
                       build_flight_grid, grid_point, voxelize_slf)
from .lp import LinearProgram, LpSolution, build_relaxed_lp, max_served_users, min_connections, solve_lp
from .propagation import (AlHouraniParams, GainMap, RadioParams, build_capacity_matrix, capacity,
                          gain_alhourani, gain_free_space, gain_tomographic, load_gain_map,
                          save_gain_map, tomographic_integral)
from .solver import (AdmmConfig, AdmmState, InfeasibleError, PlacementProblem, PlacementSolution,
                     gspa_solve, lower_bound, verify_feasibility)

__version__ = "0.1.0"
