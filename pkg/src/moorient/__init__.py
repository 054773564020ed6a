"""Multi-objective orienteering solvers.

A budgeted touring instance is split into a selection subproblem (handled by
NSGA-II/NSGA-III over binary genomes) and a routing subproblem (handled by a
trained pointer-style policy); pure permutation-coded evolutionary baselines
and exact hypervolume scoring round out the toolkit.
"""

from .instances import Instance, generate_instance, load_instance, save_instance
from .objectives import EvaluatedSolution, evaluate, profit_objectives, tour_length
from .metrics import hypervolume, pareto_filter, ref_preset
from .hybrid import HybridConfig, RunResult, run_moea_drl, run_pure_moea
from .training import Checkpoint, TrainConfig, desk_config, load_checkpoint, save_checkpoint, train

__all__ = [
    "Instance",
    "generate_instance",
    "load_instance",
    "save_instance",
    "EvaluatedSolution",
    "evaluate",
    "profit_objectives",
    "tour_length",
    "hypervolume",
    "pareto_filter",
    "ref_preset",
    "HybridConfig",
    "RunResult",
    "run_moea_drl",
    "run_pure_moea",
    "Checkpoint",
    "TrainConfig",
    "desk_config",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]

__version__ = "0.1.0"
