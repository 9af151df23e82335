"""Symbolic tabletop state and its deterministic transition function."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from ..core import ActionKind

Cell = tuple[int, int]

COLORS = ("red", "green", "blue", "yellow", "purple", "orange", "cyan", "gray")
SHAPES = ("block", "ball", "cup", "star")
REGION_KINDS = ("plate", "bin", "box", "drawer")

DEFAULT_GRID = (12, 9)

_MOVES = {
    ActionKind.MOVE_UP: (0, -1),
    ActionKind.MOVE_DOWN: (0, 1),
    ActionKind.MOVE_LEFT: (-1, 0),
    ActionKind.MOVE_RIGHT: (1, 0),
}


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneObject:
    id: str
    color: int
    shape: int
    cell: Optional[Cell]  # None while held

    @property
    def descriptor(self) -> str:
        return f"{COLORS[self.color]} {SHAPES[self.shape]}"


@dataclass(frozen=True)
class Region:
    id: str
    kind: str
    color: int
    cells: frozenset
    closed: bool = False

    @property
    def descriptor(self) -> str:
        return f"{COLORS[self.color]} {self.kind}"


@dataclass(frozen=True)
class Scene:
    width: int
    height: int
    objects: tuple[SceneObject, ...]
    regions: tuple[Region, ...]
    gripper: Cell
    holding: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(sorted(self.objects, key=lambda o: o.id)))
        object.__setattr__(self, "regions", tuple(sorted(self.regions, key=lambda r: r.id)))
        self.validate()

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise SceneError("grid must be at least 1x1")
        if not self.in_bounds(self.gripper):
            raise SceneError(f"gripper {self.gripper} out of bounds")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError("duplicate object ids")
        occupied = set()
        held = [o.id for o in self.objects if o.cell is None]
        for o in self.objects:
            if not (0 <= o.color < len(COLORS) and 0 <= o.shape < len(SHAPES)):
                raise SceneError(f"object {o.id} has an invalid color or shape")
            if o.cell is None:
                continue
            if not self.in_bounds(o.cell):
                raise SceneError(f"object {o.id} out of bounds")
            if o.cell in occupied:
                raise SceneError(f"two objects share cell {o.cell}")
            occupied.add(o.cell)
        if len(held) > 1:
            raise SceneError("more than one held object")
        if held != ([self.holding] if self.holding is not None else []):
            raise SceneError("holding field disagrees with held objects")
        for r in self.regions:
            if r.kind not in REGION_KINDS:
                raise SceneError(f"unknown region kind {r.kind!r}")
            if not r.cells or not all(self.in_bounds(c) for c in r.cells):
                raise SceneError(f"region {r.id} has invalid cells")

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def object(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def region(self, region_id: str) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    def object_at(self, cell: Cell) -> Optional[SceneObject]:
        for o in self.objects:
            if o.cell == cell:
                return o
        return None

    def regions_at(self, cell: Cell) -> list[Region]:
        return [r for r in self.regions if cell in r.cells]

    def region_of(self, object_id: str) -> Optional[Region]:
        cell = self.object(object_id).cell
        if cell is None:
            return None
        found = self.regions_at(cell)
        return found[0] if found else None

    def loose_objects(self) -> list[SceneObject]:
        """Objects resting outside every region, in row-major cell order."""
        loose = [o for o in self.objects if o.cell is not None and not self.regions_at(o.cell)]
        return sorted(loose, key=lambda o: (o.cell[1], o.cell[0]))

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "gripper": list(self.gripper),
            "holding": self.holding,
            "objects": [
                {"id": o.id, "color": o.color, "shape": o.shape,
                 "cell": None if o.cell is None else list(o.cell)}
                for o in self.objects
            ],
            "regions": [
                {"id": r.id, "kind": r.kind, "color": r.color, "closed": r.closed,
                 "cells": sorted([list(c) for c in r.cells], key=lambda c: (c[1], c[0]))}
                for r in self.regions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            gripper=tuple(d["gripper"]),
            holding=d.get("holding"),
            objects=tuple(
                SceneObject(o["id"], int(o["color"]), int(o["shape"]),
                            None if o["cell"] is None else tuple(o["cell"]))
                for o in d["objects"]
            ),
            regions=tuple(
                Region(r["id"], r["kind"], int(r["color"]),
                       frozenset(tuple(c) for c in r["cells"]), bool(r.get("closed", False)))
                for r in d["regions"]
            ),
        )

    def digest(self) -> bytes:
        """Canonical byte encoding, shipped alongside observations in simulation mode."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_digest(cls, digest: bytes) -> "Scene":
        return cls.from_dict(json.loads(digest.decode()))


def _with_object(scene: Scene, obj: SceneObject) -> tuple[SceneObject, ...]:
    return tuple(obj if o.id == obj.id else o for o in scene.objects)


def step(scene: Scene, action: ActionKind) -> Scene:
    """Apply one action. Actions that cannot take effect leave the scene unchanged."""
    action = ActionKind(action)
    if action in _MOVES:
        dx, dy = _MOVES[action]
        x = min(max(scene.gripper[0] + dx, 0), scene.width - 1)
        y = min(max(scene.gripper[1] + dy, 0), scene.height - 1)
        return replace(scene, gripper=(x, y))
    if action is ActionKind.GRASP:
        if scene.holding is not None:
            return scene
        target = scene.object_at(scene.gripper)
        if target is None or any(r.closed for r in scene.regions_at(scene.gripper)):
            return scene
        return replace(scene, objects=_with_object(scene, replace(target, cell=None)), holding=target.id)
    if action is ActionKind.RELEASE:
        here = scene.regions_at(scene.gripper)
        if scene.holding is None:
            # An empty-handed release on an open drawer pushes it shut.
            drawers = [r for r in here if r.kind == "drawer" and not r.closed]
            if not drawers:
                return scene
            closed = {r.id for r in drawers}
            regions = tuple(replace(r, closed=True) if r.id in closed else r for r in scene.regions)
            return replace(scene, regions=regions)
        if scene.object_at(scene.gripper) is not None or any(r.closed for r in here):
            return scene
        held = scene.object(scene.holding)
        return replace(scene, objects=_with_object(scene, replace(held, cell=scene.gripper)), holding=None)
    return scene


def run(scene: Scene, actions: Iterable[ActionKind]) -> Scene:
    for a in actions:
        scene = step(scene, a)
    return scene


def rect_cells(x0: int, y0: int, x1: int, y1: int) -> frozenset:
    """Cells of the inclusive rectangle [x0, x1] x [y0, y1]."""
    return frozenset((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))
