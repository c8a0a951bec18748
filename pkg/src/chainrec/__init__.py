"""Chain recurrence, Conley decomposition, and complete Lyapunov functions
computed over finite metric samples and grid-discretized boxes.

Modules
-------
- space: finite metric spaces, grids, distance-to-set queries
- systems: maps and flows, discretization, reversal, powers, orbits
- errfn: positive tolerance fields and calibration searches
- chains: chain graphs, chain recurrence, components, rectification
- conley: trapping regions, attracting/repelling sets, the decomposition
- lyapunov: effort fields, region and global Lyapunov functions, flow lift
- cli: batch pipelines over YAML configurations
"""

from .space import (MetricSample, PointSet, build_finite_space,
                    build_grid_space, build_point_cloud, dist_to_set)
from .systems import (SystemModel, builtin_flow, ode_flow, tabulated_system,
                      pointwise_map, evaluate, discretize, reverse_time,
                      power, tabulate, orbit)
from .errfn import (ErrorFunction, make_error, calibrate_ratio,
                    calibrate_pushforward, trapping_error)
from .chains import (Chain, SigmaChain, ChainGraph, validate_chain,
                     build_chain_graph, chain_recurrent_set, chain_components,
                     chain_recurrent_limit, nonwandering_set, rectify_chain,
                     sigma_cost, normalize_unit_steps)
from .conley import (TrappingRegion, is_trapping, attracting_set,
                     repelling_set, basin, trapping_from_chain,
                     conley_decomposition)
from .lyapunov import (ScalarField, effort_field, effort_k, averaged_effort,
                       region_energy, region_lyapunov, global_lyapunov,
                       flow_lyapunov)

__version__ = "0.1.0"

__all__ = [
    "MetricSample", "PointSet", "build_finite_space", "build_grid_space",
    "build_point_cloud", "dist_to_set",
    "SystemModel", "builtin_flow", "ode_flow", "tabulated_system",
    "pointwise_map", "evaluate", "discretize", "reverse_time", "power",
    "tabulate", "orbit",
    "ErrorFunction", "make_error", "calibrate_ratio", "calibrate_pushforward",
    "trapping_error",
    "Chain", "SigmaChain", "ChainGraph", "validate_chain", "build_chain_graph",
    "chain_recurrent_set", "chain_components", "chain_recurrent_limit",
    "nonwandering_set", "rectify_chain", "sigma_cost", "normalize_unit_steps",
    "TrappingRegion", "is_trapping", "attracting_set", "repelling_set",
    "basin", "trapping_from_chain", "conley_decomposition",
    "ScalarField", "effort_field", "effort_k", "averaged_effort",
    "region_energy", "region_lyapunov", "global_lyapunov", "flow_lyapunov",
]
