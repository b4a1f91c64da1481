"""Discrete p-energies, conductances and Poincare constants on Sierpinski carpet graphs."""

__version__ = "0.1.0"

from .carpet import SYMMETRIES, LatticePoint, Word, cell_box, symmetry
from .energy import GraphFunction, p_energy
from .estimators import BesovExponentEstimator, PHarmonicSolver, PoincareEstimator, ScalingEstimator
from .graphs import (BudgetExceeded, GraphError, build_cell_graph, build_chain_graph, build_graph,
                     build_point_graph, graph_to_json)
from .solver import (ConstraintSpec, SolveReport, SolverOptions, conductance, conductance_report,
                     rayleigh_max, solve_dirichlet, solve_mean_constrained)

__all__ = [
    "SYMMETRIES", "LatticePoint", "Word", "cell_box", "symmetry",
    "GraphFunction", "p_energy",
    "BesovExponentEstimator", "PHarmonicSolver", "PoincareEstimator", "ScalingEstimator",
    "BudgetExceeded", "GraphError", "build_cell_graph", "build_chain_graph", "build_graph",
    "build_point_graph", "graph_to_json",
    "ConstraintSpec", "SolveReport", "SolverOptions", "conductance", "conductance_report",
    "rayleigh_max", "solve_dirichlet", "solve_mean_constrained",
]
