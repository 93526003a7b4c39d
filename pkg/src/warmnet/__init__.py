"""Activity-reinforced layered random graph.

Nodes ``(x, h)`` of Z x Z>=0 reinforce their out-edges to layer ``h + 1``
like a superlinear Polya urn biased by Pareto fitnesses.  The edges that
survive form a tree, in which layer-0 nodes at distance N are about
``2 log_a N`` apart.
"""

__version__ = "0.1.0"

from .lattice import ModelParams, NodeId, neighborhood_overlap, out_neighbors, reach
from .fitness import FitnessField, NodeStream, Tag, pareto_inverse
from .urn import UrnInstance, WinnerResult, UncertifiedWinnerError, q_epsilon, sample_winner_rubin, simulate_urn_steps
from .coalescence import DistanceSample, WalkPair, d_sequence, distance, step_walk
from .dynamics import Window, WeightState, export_graph, relevant_edges, run, step
from .experiments import ExperimentConfig, SummaryRow, fittest_choice_rate, monte_carlo_distance, pareto_tightness, tail_estimate

__all__ = [
    "ModelParams", "NodeId", "reach", "out_neighbors", "neighborhood_overlap",
    "FitnessField", "NodeStream", "Tag", "pareto_inverse",
    "UrnInstance", "WinnerResult", "UncertifiedWinnerError", "q_epsilon", "sample_winner_rubin", "simulate_urn_steps",
    "DistanceSample", "WalkPair", "d_sequence", "distance", "step_walk",
    "Window", "WeightState", "export_graph", "relevant_edges", "run", "step",
    "ExperimentConfig", "SummaryRow", "fittest_choice_rate", "monte_carlo_distance", "pareto_tightness", "tail_estimate",
]
