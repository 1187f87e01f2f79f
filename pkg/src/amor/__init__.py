"""Adaptive Metropolis with online relabeling for permutation-invariant targets."""

__version__ = "0.1.0"

from .permgroup import GroupError, Permutation, PermutationGroup, group_from_generators, parse_group_spec
from .relabel import AdaptiveState, InvalidStateError, optimal_permutation, theta_margin
from .samplers import (SAMPLERS, RunOutput, SamplerConfig, SamplerError, run_am, run_am_ordered,
                       run_amor, run_celeux, run_reference_rwm, run_sampler)
from .targets import SymmetrizedTarget, make_benchmark_target

__all__ = [
    "__version__", "GroupError", "Permutation", "PermutationGroup", "group_from_generators",
    "parse_group_spec", "AdaptiveState", "InvalidStateError", "optimal_permutation", "theta_margin",
    "SAMPLERS", "RunOutput", "SamplerConfig", "SamplerError", "run_am", "run_am_ordered", "run_amor",
    "run_celeux", "run_reference_rwm", "run_sampler", "SymmetrizedTarget", "make_benchmark_target",
]
