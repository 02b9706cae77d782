"""Abductive root-cause reasoning over an explicit causal-graph belief state."""

from .control import HypothesisSpec, MachineState, TransitionParams
from .engine import Ablation, EpisodeResult, RunConfig, replay, run_episode
from .graph import BeliefGraph, GraphUpdate
from .scenario import Scenario, load, load_bundled

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "BeliefGraph",
    "EpisodeResult",
    "GraphUpdate",
    "HypothesisSpec",
    "MachineState",
    "RunConfig",
    "Scenario",
    "TransitionParams",
    "load",
    "load_bundled",
    "replay",
    "run_episode",
]
