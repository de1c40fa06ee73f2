"""Learned surrogates for parametric nonconvex optimization.

The surrogate objective is the pointwise minimum of K monotone-of-convex
components, so every instance is solved by K independent convex problems.
"""
from .components import ComponentSpec, ContractError, HeadSpec
from .data import Sample, TrainingDataset
from .model import Architecture, SurrogateModel, make_architecture
from .region import FeasibleRegion, ProblemSpec
from .solve import DecompositionResult, SolverOptions, decompose_solve, solve_subproblem
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "ComponentSpec",
    "ContractError",
    "DecompositionResult",
    "FeasibleRegion",
    "HeadSpec",
    "ProblemSpec",
    "Sample",
    "SolverOptions",
    "SurrogateModel",
    "TrainConfig",
    "TrainingDataset",
    "decompose_solve",
    "make_architecture",
    "solve_subproblem",
    "train",
]
