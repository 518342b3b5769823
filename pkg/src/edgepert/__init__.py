"""Edge perturbation for graph augmentation and attack, with a small GNN evaluator."""

from .graph import Graph, PerturbationPlan, apply_plan, edge_homophily

__version__ = "0.1.0"

__all__ = ["Graph", "PerturbationPlan", "apply_plan", "edge_homophily"]
