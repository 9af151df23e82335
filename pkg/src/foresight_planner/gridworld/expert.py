"""Scripted expert: the shortest action sequence that completes an instruction."""
from __future__ import annotations

from ..core import ActionKind
from .grammar import (
    Instruction,
    InfeasibleError,
    is_complete,
    parse_instruction,
    resolve_object,
    resolve_region,
)
from .scene import Cell, Scene, run


def path(start: Cell, goal: Cell) -> list[ActionKind]:
    """Horizontal leg first, then vertical."""
    dx, dy = goal[0] - start[0], goal[1] - start[1]
    moves = [ActionKind.MOVE_RIGHT if dx > 0 else ActionKind.MOVE_LEFT] * abs(dx)
    moves += [ActionKind.MOVE_DOWN if dy > 0 else ActionKind.MOVE_UP] * abs(dy)
    return moves


def _free_cells(scene: Scene, cells) -> list[Cell]:
    free = [c for c in cells if scene.object_at(c) is None]
    return sorted(free, key=lambda c: (c[1], c[0]))


def _drop_held(scene: Scene) -> list[ActionKind]:
    here = scene.regions_at(scene.gripper)
    if scene.object_at(scene.gripper) is not None or any(r.closed for r in here):
        raise InfeasibleError("holding an unrelated object with nowhere to put it down")
    return [ActionKind.RELEASE]


def expert_actions(scene: Scene, instruction: Instruction | str) -> list[ActionKind]:
    if isinstance(instruction, str):
        instruction = parse_instruction(instruction)
    if instruction.verb == "close":
        drawer = resolve_region(scene, instruction.region)
        if drawer.kind != "drawer":
            raise InfeasibleError("only drawers can be closed")
    if is_complete(scene, instruction):
        return []

    actions: list[ActionKind] = []
    if instruction.verb == "close":
        if scene.holding is not None:
            actions += _drop_held(scene)
        target = sorted(drawer.cells, key=lambda c: (c[1], c[0]))[0]
        return actions + path(scene.gripper, target) + [ActionKind.RELEASE]

    region = resolve_region(scene, instruction.region) if instruction.verb == "put" else None
    obj = resolve_object(scene, instruction.obj, region)
    pos = scene.gripper
    if scene.holding is not None and scene.holding != obj.id:
        actions += _drop_held(scene)
    if scene.holding != obj.id:
        if any(r.closed for r in scene.regions_at(obj.cell)):
            raise InfeasibleError(f"{obj.descriptor} is shut inside a drawer")
        actions += path(pos, obj.cell) + [ActionKind.GRASP]
        pos = obj.cell
    if region is None:
        return actions
    if region.closed:
        raise InfeasibleError(f"the {region.descriptor} is closed")
    free = _free_cells(run(scene, actions), region.cells)
    if not free:
        raise InfeasibleError(f"no free cell in the {region.descriptor}")
    return actions + path(pos, free[0]) + [ActionKind.RELEASE]


def simulate_subtask(scene: Scene, instruction: Instruction | str) -> Scene:
    """Scene after the expert executes ``instruction``; the input is untouched."""
    if isinstance(instruction, str):
        instruction = parse_instruction(instruction)
    result = run(scene, expert_actions(scene, instruction))
    if not is_complete(result, instruction):
        raise InfeasibleError(f"expert could not complete {instruction.text!r}")
    return result
