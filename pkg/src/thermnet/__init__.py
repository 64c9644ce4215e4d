"""Lumped-parameter thermal network analysis for passively cooled space instruments.

The main entry points are re-exported here; see the submodules for details.
"""
from .errors import ModelError, SolverError, ThermnetError
from .model import Model, load_model, parse_model, serialize_model
from .network import Network, heat_flow_report, residual
from .solvers import SolveOptions, close_arithmetic_nodes, solve_steady_iterative, solve_steady_newton, solve_transient

__version__ = "0.1.0"

__all__ = [
    "ModelError", "SolverError", "ThermnetError", "Model", "load_model", "parse_model", "serialize_model",
    "Network", "heat_flow_report", "residual", "SolveOptions", "close_arithmetic_nodes",
    "solve_steady_iterative", "solve_steady_newton", "solve_transient", "__version__",
]
