"""Observation capture from simulator state."""
from __future__ import annotations

from ..core import HEAD_CAMERA, WRIST_CAMERA, Observation
from .policies import proprio_for
from .render import DEFAULT_CELL_PIXELS, render
from .scene import Scene


def observe(scene: Scene, step_index: int = 0, step_rate: float = 10,
            cell_pixels: int = DEFAULT_CELL_PIXELS, with_digest: bool = True) -> Observation:
    return Observation(
        step_index=step_index,
        timestamp_ms=int(round(step_index * 1000 / step_rate)),
        cameras={
            HEAD_CAMERA: render(scene, HEAD_CAMERA, cell_pixels),
            WRIST_CAMERA: render(scene, WRIST_CAMERA, cell_pixels),
        },
        proprio=proprio_for(scene),
        scene_digest=scene.digest() if with_digest else None,
    )
