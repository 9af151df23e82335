"""Scripted low-level policies.

* :class:`ExpertPolicy` reads the simulator state digest (privileged).
* :class:`GoalImagePolicy` works from pixels only: it compares the head image
  with the goal image in the reserved slot and servoes toward the difference.
* :class:`TextPolicy` works from pixels and the instruction text, but can only
  ground object and region phrases listed in its grounding table.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..core import DEFAULT_CHUNK_LENGTH, ActionChunk, ActionKind, Observation
from .expert import expert_actions, path
from .grammar import GrammarError, InfeasibleError, parse_instruction, resolve_region
from .render import DEFAULT_CELL_PIXELS, HeadView, parse_head
from .scene import Cell, Scene

HELD = "held"


def proprio_for(scene: Scene) -> tuple[float, float, float]:
    """Gripper cell and grip state, the embodiment's proprioceptive vector."""
    return (float(scene.gripper[0]), float(scene.gripper[1]), 1.0 if scene.holding is not None else 0.0)


def _row_major(cells: Iterable[Cell]) -> list[Cell]:
    return sorted(cells, key=lambda c: (c[1], c[0]))


class _ChunkPolicy:
    def __init__(self, chunk_length: int = DEFAULT_CHUNK_LENGTH, cell_pixels: int = DEFAULT_CELL_PIXELS):
        if chunk_length < 1:
            raise ValueError("chunk_length must be at least 1")
        self.chunk_length = chunk_length
        self.cell_pixels = cell_pixels

    def _chunk(self, actions) -> ActionChunk:
        return ActionChunk.padded(actions, self.chunk_length)


class NoOpPolicy(_ChunkPolicy):
    name = "noop"

    def act(self, observation: Observation, subtask_text: str) -> ActionChunk:
        return self._chunk([])


class RandomPolicy(_ChunkPolicy):
    """Uniformly random actions; the stream is keyed by seed, step and text."""

    name = "random"

    def __init__(self, seed: int = 0, **kwargs):
        super().__init__(**kwargs)
        self.seed = seed

    def act(self, observation: Observation, subtask_text: str) -> ActionChunk:
        rng = random.Random(f"{self.seed}:{observation.step_index}:{subtask_text}")
        return self._chunk([rng.choice(list(ActionKind)) for _ in range(self.chunk_length)])


class ExpertPolicy(_ChunkPolicy):
    name = "expert"

    def act(self, observation: Observation, subtask_text: str) -> ActionChunk:
        if observation.scene_digest is None:
            raise ValueError("the expert policy needs the simulator state digest")
        scene = Scene.from_digest(observation.scene_digest)
        try:
            return self._chunk(expert_actions(scene, subtask_text))
        except (GrammarError, InfeasibleError):
            return self._chunk([])


def _gripper_state(view: HeadView, observation: Observation) -> tuple[Cell, bool]:
    if len(observation.proprio) >= 3:
        q = observation.proprio
        return (int(q[0]), int(q[1])), q[2] > 0.5
    cell = view.gripper_cell()
    if cell is None:
        raise ValueError("gripper not visible and no proprioception")
    return cell, view.cells[cell].holding


def _drop(view: HeadView, at: Cell) -> list[ActionKind]:
    here = view.cells[at]
    return [] if here.region_closed else [ActionKind.RELEASE]


def _positions(view: HeadView) -> dict:
    out: dict = {}
    for cell, desc in view.resting_objects().items():
        out.setdefault(desc, set()).add(cell)
    held = view.held()
    if held is not None:
        out.setdefault(held, set()).add(HELD)
    return out


class GoalImagePolicy(_ChunkPolicy):
    """Visual servoing toward the goal image.

    Each chunk looks for the first object whose position differs between the
    current and goal images and moves it; failing that it closes any drawer
    the goal shows shut, and failing that it moves the gripper to where the
    goal shows it.
    """

    name = "goal"

    def plan_actions(self, observation: Observation) -> list[ActionKind]:
        if observation.goal is None:
            return []
        cur = parse_head(observation.head, self.cell_pixels)
        goal = parse_head(observation.goal, self.cell_pixels)
        pos, holding = _gripper_state(cur, observation)
        now, then = _positions(cur), _positions(goal)

        for desc in sorted(set(now) | set(then)):
            src = sorted(now.get(desc, set()) - then.get(desc, set()), key=str)
            dst = sorted(then.get(desc, set()) - now.get(desc, set()), key=str)
            if not src or not dst:
                continue
            src, dst = src[0], dst[0]
            actions: list[ActionKind] = []
            if src != HELD:
                if holding:
                    actions += _drop(cur, pos)
                actions += path(pos, src) + [ActionKind.GRASP]
                pos = src
            if dst != HELD:
                actions += path(pos, dst) + [ActionKind.RELEASE]
            return actions

        shut = [c for c, v in goal.cells.items()
                if v.region_closed and not cur.cells[c].region_closed and v.region_color == cur.cells[c].region_color]
        if shut:
            actions = _drop(cur, pos) if holding else []
            return actions + path(pos, _row_major(shut)[0]) + [ActionKind.RELEASE]

        target = goal.gripper_cell()
        if target is not None and target != pos:
            return path(pos, target)
        return []

    def act(self, observation: Observation, subtask_text: str) -> ActionChunk:
        return self._chunk(self.plan_actions(observation))


@dataclass
class GroundingTable:
    """Phrases the text policy learned to ground, mapped to visual signatures."""

    objects: dict = field(default_factory=dict)  # "red block" -> (color, shape)
    regions: dict = field(default_factory=dict)  # "blue box" / "drawer" -> color

    @classmethod
    def from_scenarios(cls, scenarios) -> "GroundingTable":
        table = cls()
        for spec in scenarios:
            for text in spec.subtasks:
                ins = parse_instruction(text)
                if ins.obj is not None:
                    table.objects[ins.obj.phrase] = (ins.obj.color, ins.obj.shape)
                if ins.region is not None:
                    region = resolve_region(spec.scene, ins.region)
                    table.regions[ins.region.phrase] = region.color
        return table

    def knows_object(self, desc: tuple[int, int]) -> bool:
        return desc in self.objects.values()


class TextPolicy(_ChunkPolicy):
    """Instruction-following from pixels with a fixed grounding table.

    An ungroundable object phrase makes the policy reach for the nearest loose
    object it does know, which is how grounding failures show up as
    undesired grasps. Instructions outside the grammar produce NoOps.
    """

    name = "text"

    def __init__(self, grounding: GroundingTable, **kwargs):
        super().__init__(**kwargs)
        self.grounding = grounding

    def _nearest_familiar(self, view: HeadView, pos: Cell) -> Optional[Cell]:
        loose = [c for c, d in view.resting_objects().items()
                 if view.cells[c].region_color is None and self.grounding.knows_object(d)]
        if not loose:
            return None
        return min(loose, key=lambda c: (abs(c[0] - pos[0]) + abs(c[1] - pos[1]), c[1], c[0]))

    def plan_actions(self, observation: Observation, text: str) -> list[ActionKind]:
        try:
            ins = parse_instruction(text)
        except GrammarError:
            return []
        view = parse_head(observation.head, self.cell_pixels)
        pos, holding = _gripper_state(view, observation)

        region_color = None
        if ins.region is not None:
            region_color = self.grounding.regions.get(ins.region.phrase)
            if region_color is None:
                return []
        region_cells = view.region_cells(region_color) if region_color is not None else []

        if ins.verb == "close":
            if not region_cells or all(view.cells[c].region_closed for c in region_cells):
                return []
            actions = _drop(view, pos) if holding else []
            return actions + path(pos, region_cells[0]) + [ActionKind.RELEASE]

        desc = self.grounding.objects.get(ins.obj.phrase)
        resting = view.resting_objects()
        actions: list[ActionKind] = []
        if desc is not None:
            if ins.verb == "put" and any(resting.get(c) == desc for c in region_cells):
                return []
            if ins.verb == "pick" and holding and view.held() == desc:
                return []
            if not (holding and view.held() == desc):
                candidates = _row_major(c for c, d in resting.items() if d == desc and c not in region_cells)
                if not candidates:
                    return []
                if holding:
                    actions += _drop(view, pos)
                actions += path(pos, candidates[0]) + [ActionKind.GRASP]
                pos = candidates[0]
        elif not holding:
            guess = self._nearest_familiar(view, pos)
            if guess is None:
                return []
            actions += path(pos, guess) + [ActionKind.GRASP]
            pos = guess
        if ins.verb == "pick":
            return actions
        free = [c for c in region_cells if c not in resting and not view.cells[c].region_closed]
        if not free:
            return actions
        return actions + path(pos, free[0]) + [ActionKind.RELEASE]

    def act(self, observation: Observation, subtask_text: str) -> ActionChunk:
        return self._chunk(self.plan_actions(observation, subtask_text))
