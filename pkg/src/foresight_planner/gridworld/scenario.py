"""Scenario definitions and their YAML file format.

Schema (all keys except ``atomic_actions`` and ``ood_tags`` required)::

    name: pick_place
    task: put the red block in the blue box
    ood_tags: [Spatial]          # subset of Spatial, Comp, Joint
    grid: [12, 9]
    gripper: [0, 0]
    objects:
      red_block: {color: red, shape: block, cell: [2, 3]}
    regions:
      blue_box: {kind: box, color: blue, rect: [9, 5, 11, 7]}   # or cells: [[x, y], ...]
    subtasks:
      - put the red block in the blue box
    atomic_actions:              # derived from subtasks when omitted
      - {approach_grasp: red_block}
      - {move_place: [red_block, blue_box]}
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .grammar import InfeasibleError, is_complete, parse_instruction, resolve_object, resolve_region
from .expert import simulate_subtask
from .scene import COLORS, SHAPES, Region, Scene, SceneObject, rect_cells

OOD_TAGS = ("Spatial", "Comp", "Joint")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AtomicActionSpec:
    kind: str  # "approach_grasp" or "move_place"
    object_id: str
    region_id: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("approach_grasp", "move_place"):
            raise ScenarioError(f"unknown atomic action kind {self.kind!r}")
        if (self.kind == "move_place") != (self.region_id is not None):
            raise ScenarioError("move_place needs a region and approach_grasp must not have one")

    def to_dict(self) -> dict:
        if self.kind == "approach_grasp":
            return {"approach_grasp": self.object_id}
        return {"move_place": [self.object_id, self.region_id]}


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    scene: Scene
    task: str
    subtasks: tuple[str, ...]
    atomic_actions: tuple[AtomicActionSpec, ...]
    ood_tags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.subtasks:
            raise ScenarioError(f"scenario {self.name!r} has an empty subtask plan")
        for text in self.subtasks:
            parse_instruction(text)
        bad = set(self.ood_tags) - set(OOD_TAGS)
        if bad:
            raise ScenarioError(f"unknown OOD tags {sorted(bad)}")
        ids = {o.id for o in self.scene.objects}
        regions = {r.id for r in self.scene.regions}
        for a in self.atomic_actions:
            if a.object_id not in ids or (a.region_id is not None and a.region_id not in regions):
                raise ScenarioError(f"atomic action {a} references unknown ids")

    def check_feasible(self) -> Scene:
        """Run the expert through the plan; returns the final scene."""
        scene = self.scene
        for text in self.subtasks:
            scene = simulate_subtask(scene, text)
        return scene

    def task_complete(self, scene: Scene) -> bool:
        return all(is_complete(scene, t) for t in self.subtasks)

    def variant(self, setting: int, seed: int = 0) -> "ScenarioSpec":
        """A seeded re-layout: loose objects and the gripper move to random free cells."""
        rng = random.Random(f"{seed}:{self.name}:{setting}")
        scene = self.scene
        region_cells = set().union(*(r.cells for r in scene.regions)) if scene.regions else set()
        fixed = {o.cell for o in scene.objects if o.cell is not None and o.cell in region_cells}
        candidates = [(x, y) for y in range(scene.height) for x in range(scene.width)
                      if (x, y) not in region_cells and (x, y) not in fixed]
        loose = [o for o in scene.objects if o.cell is not None and o.cell not in region_cells]
        picks = rng.sample(candidates, len(loose))
        moved = {o.id: replace(o, cell=c) for o, c in zip(loose, picks)}
        objects = tuple(moved.get(o.id, o) for o in scene.objects)
        gripper = rng.choice([(x, y) for y in range(scene.height) for x in range(scene.width)])
        return replace(self, scene=replace(scene, objects=objects, gripper=gripper))


def derive_atomic_actions(scene: Scene, subtasks) -> tuple[AtomicActionSpec, ...]:
    """Break a subtask plan into approach-and-grasp / move-and-place units."""
    out = []
    for text in subtasks:
        ins = parse_instruction(text)
        if ins.verb == "close":
            continue
        region = resolve_region(scene, ins.region) if ins.verb == "put" else None
        obj = resolve_object(scene, ins.obj, region)
        out.append(AtomicActionSpec("approach_grasp", obj.id))
        if region is not None:
            out.append(AtomicActionSpec("move_place", obj.id, region.id))
        scene = simulate_subtask(scene, ins)
    return tuple(out)


def _color(name) -> int:
    try:
        return COLORS.index(name) if isinstance(name, str) else int(name)
    except ValueError:
        raise ScenarioError(f"unknown color {name!r}") from None


def _shape(name) -> int:
    try:
        return SHAPES.index(name) if isinstance(name, str) else int(name)
    except ValueError:
        raise ScenarioError(f"unknown shape {name!r}") from None


def scenario_from_dict(d: dict) -> ScenarioSpec:
    try:
        width, height = d.get("grid", (12, 9))
        objects = tuple(
            SceneObject(oid, _color(o["color"]), _shape(o["shape"]), tuple(o["cell"]))
            for oid, o in d["objects"].items()
        )
        regions = []
        for rid, r in d["regions"].items():
            cells = rect_cells(*r["rect"]) if "rect" in r else frozenset(tuple(c) for c in r["cells"])
            regions.append(Region(rid, r["kind"], _color(r["color"]), cells, bool(r.get("closed", False))))
        scene = Scene(width, height, objects, tuple(regions), tuple(d.get("gripper", (0, 0))))
        subtasks = tuple(d["subtasks"])
        if "atomic_actions" in d:
            atomics = []
            for a in d["atomic_actions"]:
                if "approach_grasp" in a:
                    atomics.append(AtomicActionSpec("approach_grasp", a["approach_grasp"]))
                else:
                    oid, rid = a["move_place"]
                    atomics.append(AtomicActionSpec("move_place", oid, rid))
            atomics = tuple(atomics)
        else:
            atomics = derive_atomic_actions(scene, subtasks)
        return ScenarioSpec(
            name=str(d["name"]),
            scene=scene,
            task=str(d["task"]),
            subtasks=subtasks,
            atomic_actions=atomics,
            ood_tags=frozenset(d.get("ood_tags", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc
    except InfeasibleError as exc:
        raise ScenarioError(str(exc)) from exc


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    s = spec.scene
    return {
        "name": spec.name,
        "task": spec.task,
        "ood_tags": sorted(spec.ood_tags),
        "grid": [s.width, s.height],
        "gripper": list(s.gripper),
        "objects": {o.id: {"color": COLORS[o.color], "shape": SHAPES[o.shape], "cell": list(o.cell)}
                    for o in s.objects},
        "regions": {r.id: {"kind": r.kind, "color": COLORS[r.color], "closed": r.closed,
                           "cells": sorted([list(c) for c in r.cells], key=lambda c: (c[1], c[0]))}
                    for r in s.regions},
        "subtasks": list(spec.subtasks),
        "atomic_actions": [a.to_dict() for a in spec.atomic_actions],
    }


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping at top level")
    return scenario_from_dict(data)


def save_scenario(spec: ScenarioSpec, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(spec), sort_keys=False))


def load_training(path) -> list[ScenarioSpec]:
    """The training configuration list: a mapping with a ``scenarios`` list."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("scenarios"), list):
        raise ScenarioError(f"{path}: expected a mapping with a 'scenarios' list")
    return [scenario_from_dict(d) for d in data["scenarios"]]


def load_suite(directory) -> list[ScenarioSpec]:
    """All scenario files in ``directory`` except the training list, sorted by name."""
    paths = sorted(p for p in Path(directory).glob("*.yaml") if p.name != "training.yaml")
    return [load_scenario(p) for p in paths]
