"""Closed template grammar for subtask instructions.

Templates::

    pick up the <color> <shape>
    put the <color> <shape> in|on the [<color>] <kind>
    close the [<color>] drawer
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .scene import COLORS, REGION_KINDS, SHAPES, Scene, SceneObject, Region


class GrammarError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


_COLOR = "|".join(COLORS)
_SHAPE = "|".join(SHAPES)
_KIND = "|".join(REGION_KINDS)

_PICK = re.compile(rf"^pick up the ({_COLOR}) ({_SHAPE})$")
_PUT = re.compile(rf"^put the ({_COLOR}) ({_SHAPE}) (in|on) the (?:({_COLOR}) )?({_KIND})$")
_CLOSE = re.compile(rf"^close the (?:({_COLOR}) )?drawer$")


@dataclass(frozen=True)
class ObjectRef:
    color: int
    shape: int

    @property
    def phrase(self) -> str:
        return f"{COLORS[self.color]} {SHAPES[self.shape]}"


@dataclass(frozen=True)
class RegionRef:
    kind: str
    color: Optional[int] = None

    @property
    def phrase(self) -> str:
        return self.kind if self.color is None else f"{COLORS[self.color]} {self.kind}"


@dataclass(frozen=True)
class Instruction:
    verb: str  # "pick", "put" or "close"
    obj: Optional[ObjectRef] = None
    region: Optional[RegionRef] = None

    @property
    def text(self) -> str:
        if self.verb == "pick":
            return f"pick up the {self.obj.phrase}"
        if self.verb == "put":
            prep = "on" if self.region.kind == "plate" else "in"
            return f"put the {self.obj.phrase} {prep} the {self.region.phrase}"
        return f"close the {self.region.phrase}"


def parse_instruction(text: str) -> Instruction:
    t = " ".join(text.strip().lower().split())
    if m := _PICK.match(t):
        return Instruction("pick", ObjectRef(COLORS.index(m[1]), SHAPES.index(m[2])))
    if m := _PUT.match(t):
        color = COLORS.index(m[4]) if m[4] else None
        return Instruction("put", ObjectRef(COLORS.index(m[1]), SHAPES.index(m[2])), RegionRef(m[5], color))
    if m := _CLOSE.match(t):
        return Instruction("close", region=RegionRef("drawer", COLORS.index(m[1]) if m[1] else None))
    raise GrammarError(f"instruction not in grammar: {text!r}")


def put_instruction(obj: SceneObject, region: Region) -> str:
    return Instruction("put", ObjectRef(obj.color, obj.shape), RegionRef(region.kind, region.color)).text


def resolve_region(scene: Scene, ref: RegionRef) -> Region:
    matches = [r for r in scene.regions if r.kind == ref.kind and (ref.color is None or r.color == ref.color)]
    if not matches:
        raise InfeasibleError(f"no {ref.phrase} in scene")
    return matches[0]


def _row_major(o: SceneObject, scene: Scene) -> tuple[int, int]:
    cell = o.cell if o.cell is not None else scene.gripper
    return (cell[1], cell[0])


def resolve_object(scene: Scene, ref: ObjectRef, region: Optional[Region] = None) -> SceneObject:
    """Pick the object an instruction refers to.

    A held match wins; otherwise ties go to the first match in row-major order
    that is not already inside ``region``.
    """
    matches = [o for o in scene.objects if o.color == ref.color and o.shape == ref.shape]
    if not matches:
        raise InfeasibleError(f"no {ref.phrase} in scene")
    held = [o for o in matches if o.cell is None]
    if held:
        return held[0]
    matches.sort(key=lambda o: _row_major(o, scene))
    if region is not None:
        pending = [o for o in matches if o.cell not in region.cells]
        if pending:
            return pending[0]
    return matches[0]


def is_complete(scene: Scene, instruction: Instruction | str) -> bool:
    """Whether ``scene`` satisfies the instruction's completion predicate."""
    if isinstance(instruction, str):
        instruction = parse_instruction(instruction)
    if instruction.verb == "close":
        return resolve_region(scene, instruction.region).closed
    matches = [o for o in scene.objects if o.color == instruction.obj.color and o.shape == instruction.obj.shape]
    if instruction.verb == "pick":
        return any(o.cell is None for o in matches)
    region = resolve_region(scene, instruction.region)
    return any(o.cell is not None and o.cell in region.cells for o in matches)
