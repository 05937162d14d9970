"""Receding-horizon model predictive control on Legendre-Gauss-Radau collocation.

Each MPC window is transcribed into a scaled NLP (states at LGR points,
controls at nodes spaced at least one sampling time apart) and solved by a
finite-difference SQP method, so problem functions can be black boxes. The
first sampling interval of each solution is applied to a simulated plant.
"""
from .lgr_basis import LgrGrid, diff_matrix, lgr_grid, lgr_nodes, lgr_weights
from .mpc_loop import MpcConfig, RunRecord, accumulate_costs, run, warm_start
from .nlp_solver import SolverOptions, SolverResult, solve
from .ocp_model import OcpProblem, ScalingSet, scaling_from_bounds, validate
from .problems import AnalyticSolution, REGISTRY, load
from .transcription import MeshConfig, transcribe

__all__ = [
    "AnalyticSolution", "LgrGrid", "MeshConfig", "MpcConfig", "OcpProblem", "REGISTRY",
    "RunRecord", "ScalingSet", "SolverOptions", "SolverResult", "accumulate_costs",
    "diff_matrix", "lgr_grid", "lgr_nodes", "lgr_weights", "load", "run",
    "scaling_from_bounds", "solve", "transcribe", "validate", "warm_start",
]
