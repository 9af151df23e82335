"""Foresight image generators.

Two generators produce the predicted head-camera image for a subtask:

* :class:`OracleForesight` rolls the scripted expert forward in the simulator
  and renders the result (midpoint or end of the subtask);
* :class:`FlowForesight` integrates a conditional velocity field from seeded
  Gaussian noise with the explicit Euler method.

Images live in pixel space mapped affinely to [-1, 1]; there is no learned
autoencoder, so the "latent" is the image itself.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .core import Image
from .datapipe import OffsetPolicy
from .gridworld.expert import expert_actions
from .gridworld.grammar import parse_instruction
from .gridworld.render import render
from .gridworld.scene import Scene, run

DEFAULT_STEPS = 8
REFERENCE_STEPS = 2 ** 14


class NumericsError(ArithmeticError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"velocity field returned non-finite values at step {step}")


class InputError(ValueError):
    pass


# -- image <-> real vectors -----------------------------------------------------

def image_to_vector(image: Image) -> np.ndarray:
    return np.frombuffer(image.data, dtype=np.uint8).astype(np.float64) / 255.0 * 2.0 - 1.0


def quantize_levels(levels: np.ndarray) -> np.ndarray:
    """Round nonnegative levels to integers, halves away from zero."""
    return np.clip(np.floor(levels + 0.5), 0, 255).astype(np.uint8)


def vector_to_image(x: np.ndarray, width: int, height: int) -> Image:
    """Clamp to [-1, 1] and quantize to 8 bits."""
    levels = (np.clip(x, -1.0, 1.0) + 1.0) / 2.0 * 255.0
    return Image(width, height, quantize_levels(levels).tobytes())


def initial_noise(seed: int, size: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(size)


# -- velocity fields --------------------------------------------------------------

class VelocityField(Protocol):
    def __call__(self, x: np.ndarray, t: float, cond: np.ndarray) -> np.ndarray: ...


class ZeroField:
    def __call__(self, x, t, cond):
        return np.zeros_like(x)


class PointMassField:
    """Straight-line flow onto a single target: v = (target - x) / (1 - t).

    The target defaults to the condition itself. Euler integration on the
    uniform grid lands exactly on the target for every step count.
    """

    def __init__(self, target: Optional[np.ndarray] = None):
        self.target = target

    def __call__(self, x, t, cond):
        target = cond if self.target is None else self.target
        return (target - x) / (1.0 - t)


class GrowthField:
    """v = rate * t * x; the exact flow is x0 * exp(rate * t**2 / 2)."""

    def __init__(self, rate: float = 1.0):
        self.rate = rate

    def __call__(self, x, t, cond):
        return self.rate * t * x

    def exact(self, x0: np.ndarray, t: float = 1.0) -> np.ndarray:
        return x0 * math.exp(self.rate * t * t / 2.0)


class ConcatenatedField:
    """Adapter for fields that consume ``concat(x, cond)`` as one input vector."""

    def __init__(self, fn: Callable[[np.ndarray, float], np.ndarray]):
        self.fn = fn

    def __call__(self, x, t, cond):
        return self.fn(np.concatenate([x, cond]), t)


FIELDS = {
    "pointmass": PointMassField,
    "quadratic": GrowthField,
    "zero": ZeroField,
}


# -- sampling -------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowSampleRequest:
    condition_image: Image
    field: VelocityField
    steps: int = DEFAULT_STEPS
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise InputError("steps must be at least 1")


@dataclass(frozen=True)
class LatencyReport:
    step_ms: tuple[float, ...]
    total_ms: float
    steps: int


def integrate(field: VelocityField, x0: np.ndarray, cond: np.ndarray, steps: int,
              timings: Optional[list] = None) -> np.ndarray:
    """Explicit Euler on t_k = k / steps, k = 0 .. steps-1; returns the unclamped state."""
    if steps < 1:
        raise InputError("steps must be at least 1")
    x = np.array(x0, dtype=np.float64)
    dt = 1.0 / steps
    for k in range(steps):
        t0 = time.perf_counter()
        v = np.asarray(field(x, k / steps, cond), dtype=np.float64)
        if v.shape != x.shape:
            raise ValueError(f"velocity field returned shape {v.shape}, expected {x.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericsError(k)
        x = x + dt * v
        if timings is not None:
            timings.append((time.perf_counter() - t0) * 1e3)
    return x


def euler_sample(req: FlowSampleRequest) -> tuple[Image, LatencyReport]:
    start = time.perf_counter()
    cond_img = req.condition_image
    cond = image_to_vector(cond_img)
    x0 = initial_noise(req.seed, cond.size)
    timings: list[float] = []
    x = integrate(req.field, x0, cond, req.steps, timings)
    out = vector_to_image(x, cond_img.width, cond_img.height)
    total = (time.perf_counter() - start) * 1e3
    return out, LatencyReport(tuple(timings), total, req.steps)


def mean_abs_error(a: Image, b: Image) -> float:
    """Mean absolute per-channel difference in units of the full 8-bit range."""
    da = np.frombuffer(a.data, dtype=np.uint8).astype(np.int64)
    db = np.frombuffer(b.data, dtype=np.uint8).astype(np.int64)
    return float(np.abs(da - db).mean() / 255.0)


@dataclass(frozen=True)
class SweepRow:
    steps: int
    latency: LatencyReport
    mean_abs_error: float


def sweep_steps(template: FlowSampleRequest, steps_list: Sequence[int],
                reference_steps: int = REFERENCE_STEPS) -> list[SweepRow]:
    if not steps_list:
        raise InputError("steps_list must not be empty")
    reference, _ = euler_sample(_with_steps(template, reference_steps))
    rows = []
    for n in steps_list:
        img, report = euler_sample(_with_steps(template, n))
        rows.append(SweepRow(n, report, mean_abs_error(img, reference)))
    return rows


def _with_steps(req: FlowSampleRequest, steps: int) -> FlowSampleRequest:
    return FlowSampleRequest(req.condition_image, req.field, steps, req.seed)


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    """Delimited table; ``total_ms`` is the only wall-clock column."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["steps", "total_ms", "mean_abs_error"])
        for r in rows:
            w.writerow([r.steps, f"{r.latency.total_ms:.3f}", f"{r.mean_abs_error:.6f}"])


# -- generators implementing the foresight contract ----------------------------------

def oracle_foresee(scene: Scene, subtask_text: str, offset: OffsetPolicy = OffsetPolicy.FINAL_STATE,
                   cell_pixels: int = 4) -> Image:
    actions = expert_actions(scene, parse_instruction(subtask_text))
    if OffsetPolicy(offset) is OffsetPolicy.HALF_LENGTH:
        actions = actions[: len(actions) // 2]
    return render(run(scene, actions), cell_pixels=cell_pixels)


def _cell_pixels(head: Image, scene: Scene) -> int:
    p = head.width // scene.width
    if p * scene.width != head.width or p * scene.height != head.height:
        raise InputError("head image does not match the scene grid")
    return p


class OracleForesight:
    """Foresight from the simulator itself; needs the scene digest."""

    def __init__(self, offset: OffsetPolicy = OffsetPolicy.FINAL_STATE):
        self.offset = OffsetPolicy(offset)

    def foresee(self, head_image: Image, subtask_text: str, seed: int = 0,
                scene_digest: Optional[bytes] = None) -> Image:
        if scene_digest is None:
            raise InputError("oracle foresight needs the scene digest")
        scene = Scene.from_digest(scene_digest)
        return oracle_foresee(scene, subtask_text, self.offset, _cell_pixels(head_image, scene))


class FlowForesight:
    """Euler flow sampling conditioned on the head image.

    The velocity field is a point mass on the oracle's prediction when the
    scene digest is available, and on the condition image otherwise.
    """

    def __init__(self, steps: int = DEFAULT_STEPS, offset: OffsetPolicy = OffsetPolicy.FINAL_STATE):
        self.steps = steps
        self.oracle = OracleForesight(offset)

    def foresee_with_report(self, head_image: Image, subtask_text: str, seed: int = 0,
                            scene_digest: Optional[bytes] = None) -> tuple[Image, LatencyReport]:
        target = None
        if scene_digest is not None:
            target = image_to_vector(self.oracle.foresee(head_image, subtask_text, seed, scene_digest))
        return euler_sample(FlowSampleRequest(head_image, PointMassField(target), self.steps, seed))

    def foresee(self, head_image: Image, subtask_text: str, seed: int = 0,
                scene_digest: Optional[bytes] = None) -> Image:
        return self.foresee_with_report(head_image, subtask_text, seed, scene_digest)[0]


def bench_latency(template: FlowSampleRequest, steps_list: Sequence[int], repeats: int = 21,
                  warmup: int = 2) -> dict[int, float]:
    """Median total sampling time per step count.

    Runs are interleaved across step counts (round-robin) after a warmup so
    slow drifts in machine load hit every step count alike.
    """
    if repeats < 1:
        raise InputError("repeats must be at least 1")
    reqs = {n: _with_steps(template, n) for n in steps_list}
    for _ in range(warmup):
        for req in reqs.values():
            euler_sample(req)
    totals: dict[int, list[float]] = {n: [] for n in steps_list}
    for _ in range(repeats):
        for n, req in reqs.items():
            totals[n].append(euler_sample(req)[1].total_ms)
    return {n: float(np.median(v)) for n, v in totals.items()}
