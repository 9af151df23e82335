"""Deterministic tabletop simulator, scripted expert and reference policies."""
from .env import observe
from .episode import EpisodeRecord, generate_episode
from .expert import expert_actions, path, simulate_subtask
from .grammar import GrammarError, InfeasibleError, Instruction, is_complete, parse_instruction
from .policies import (
    ExpertPolicy,
    GoalImagePolicy,
    GroundingTable,
    NoOpPolicy,
    RandomPolicy,
    TextPolicy,
    proprio_for,
)
from .render import RenderError, parse_head, render
from .scenario import (
    AtomicActionSpec,
    ScenarioError,
    ScenarioSpec,
    load_scenario,
    load_suite,
    load_training,
    save_scenario,
    scenario_from_dict,
)
from .scene import COLORS, REGION_KINDS, SHAPES, Region, Scene, SceneError, SceneObject, rect_cells, run, step

__all__ = [
    "AtomicActionSpec", "COLORS", "EpisodeRecord", "ExpertPolicy", "GoalImagePolicy", "GrammarError",
    "GroundingTable", "InfeasibleError", "Instruction", "NoOpPolicy", "REGION_KINDS", "RandomPolicy",
    "Region", "RenderError", "SHAPES", "ScenarioError", "ScenarioSpec", "Scene", "SceneError",
    "SceneObject", "TextPolicy", "expert_actions", "generate_episode", "is_complete", "load_scenario",
    "load_suite", "load_training", "observe", "parse_head", "parse_instruction", "path", "proprio_for", "rect_cells", "render",
    "run", "save_scenario", "scenario_from_dict", "simulate_subtask", "step",
]
