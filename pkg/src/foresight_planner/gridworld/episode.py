"""Scripted demonstration episodes with exact subtask frame boundaries."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from ..core import Image
from ..datapipe import EpisodeManifest, SubtaskSegment
from .expert import expert_actions
from .grammar import InfeasibleError, is_complete, parse_instruction
from .render import DEFAULT_CELL_PIXELS, render
from .scenario import ScenarioSpec
from .scene import step

DEFAULT_STEP_RATE = 10


@dataclass(frozen=True)
class EpisodeRecord:
    frames: tuple[Image, ...]
    manifest: EpisodeManifest


def _frac(x) -> Fraction:
    return Fraction(x).limit_denominator(10**6) if isinstance(x, float) else Fraction(x)


def generate_episode(
    spec: ScenarioSpec,
    fps: float = 10,
    seed: Optional[int] = None,
    step_rate: float = DEFAULT_STEP_RATE,
    cell_pixels: int = DEFAULT_CELL_PIXELS,
    source: str = "gridworld",
) -> EpisodeRecord:
    """Roll out the expert through the subtask plan, capturing head frames.

    The simulator advances ``step_rate`` steps per second; a frame of the
    post-step state is captured every time a 1/fps tick boundary is crossed.
    A subtask that captures no frame (already complete, or shorter than one
    frame period) still gets one frame of its final state.
    """
    fps_f, rate_f = _frac(fps), _frac(step_rate)
    if fps_f <= 0 or rate_f <= 0:
        raise ValueError("fps and step_rate must be positive")
    if seed is not None:
        spec = spec.variant(seed)
    scene = spec.scene
    frames: list[Image] = []
    segments: list[SubtaskSegment] = []
    k = 0
    for text in spec.subtasks:
        start = len(frames)
        for action in expert_actions(scene, text):
            scene = step(scene, action)
            k += 1
            captured = math.floor(k * fps_f / rate_f) - math.floor((k - 1) * fps_f / rate_f)
            frames.extend([render(scene, cell_pixels=cell_pixels)] * captured)
        if not is_complete(scene, parse_instruction(text)):
            raise InfeasibleError(f"expert failed {text!r}")
        if len(frames) == start:
            frames.append(render(scene, cell_pixels=cell_pixels))
        segments.append(SubtaskSegment(start, len(frames) - 1, text))
    name = spec.name if seed is None else f"{spec.name}-s{seed}"
    manifest = EpisodeManifest(
        episode_id=name,
        fps=float(fps),
        frames_dir=name,
        frame_count=len(frames),
        source=source,
        subtasks=tuple(segments),
    )
    return EpisodeRecord(tuple(frames), manifest)
