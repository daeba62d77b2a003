"""Snippet-level importance maps for black-box imitation learners.

Random masks hide parts of the demonstrations, a fresh model is trained on
what is left, and each snippet is credited with the returns of the models that
saw it.
"""
from .core import (ConfigError, ContractError, DemoSet, GridGeometry, ImportanceMap, MaskGrid,
                   ParseError, ReturnStats, RunConfig, ValidationError)
from .engine import combine_maps, run, variance_probe
from .envs import evaluate, expert_policy, gen_demos, make_env
from .learners import LearnerSpec, train
from .masking import apply_mask, gen_masks

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ContractError", "DemoSet", "GridGeometry", "ImportanceMap", "LearnerSpec",
    "MaskGrid", "ParseError", "ReturnStats", "RunConfig", "ValidationError", "apply_mask",
    "combine_maps", "evaluate", "expert_policy", "gen_demos", "gen_masks", "make_env", "run",
    "train", "variance_probe",
]
