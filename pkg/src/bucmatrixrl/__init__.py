"""Biased UC-MatrixRL with meta-learned transition-core biases."""
__version__ = "0.1.0"

from .buc_agent import RunRecord, build_optimistic_q, greedy_action, run_task
from .core_regression import RidgeState, contains, ellipsoid_radius
from .kernels import BACKEND
from .linear_mdp import (
    Features,
    LinearMdp,
    RegularityConstants,
    compute_regularity_constants,
    optimal_values,
    sample_next_state,
    transition_distribution,
)
from .meta_learner import meta_train
from .task_family import TaskFamily, family_stats, orthogonal_family, sample_core
