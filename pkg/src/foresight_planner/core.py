"""Domain types shared across the planner, generator, policy and transport layers."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Any, Mapping, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

HEAD_CAMERA = 0
WRIST_CAMERA = 1
# Reserved camera id for the appended goal image.
GOAL_SLOT = 255
DEFAULT_CHUNK_LENGTH = 8


class AugmentError(ValueError):
    pass


@dataclass(frozen=True)
class Image:
    """Row-major RGB image with 8-bit channels."""

    width: int
    height: int
    data: bytes
    channels: int = 3

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        if self.channels != 3:
            raise ValueError("only 3-channel images are supported")
        if not isinstance(self.data, bytes):
            object.__setattr__(self, "data", bytes(self.data))
        if len(self.data) != self.width * self.height * self.channels:
            raise ValueError(
                f"data length {len(self.data)} != {self.width}*{self.height}*{self.channels}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr.tobytes())

    @classmethod
    def blank(cls, width: int, height: int, color=(0, 0, 0)) -> "Image":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:] = color
        return cls.from_array(arr)

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.height, self.width, 3)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.height)


@dataclass(frozen=True)
class Observation:
    """What the robot sees at one control tick.

    ``scene_digest`` is only populated in simulation mode; pixel-only
    components must not depend on it.
    """

    step_index: int
    timestamp_ms: int
    cameras: Mapping[int, Image]
    proprio: tuple[float, ...] = ()
    scene_digest: Optional[bytes] = None

    def __post_init__(self):
        if self.step_index < 0:
            raise ValueError("step_index must be nonnegative")
        if HEAD_CAMERA not in self.cameras:
            raise ValueError("observation is missing the head camera")
        object.__setattr__(self, "cameras", dict(sorted(self.cameras.items())))
        object.__setattr__(self, "proprio", tuple(float(v) for v in self.proprio))

    @property
    def head(self) -> Image:
        return self.cameras[HEAD_CAMERA]

    @property
    def goal(self) -> Optional[Image]:
        return self.cameras.get(GOAL_SLOT)


class ActionKind(enum.Enum):
    MOVE_UP = "MoveUp"
    MOVE_DOWN = "MoveDown"
    MOVE_LEFT = "MoveLeft"
    MOVE_RIGHT = "MoveRight"
    GRASP = "Grasp"
    RELEASE = "Release"
    NOOP = "NoOp"


# Actions carry no arguments, so the kind is the action.
Action = ActionKind


@dataclass(frozen=True)
class ActionChunk:
    actions: tuple[ActionKind, ...]
    plan_step: int = 0

    def __post_init__(self):
        if len(self.actions) < 1:
            raise ValueError("an action chunk needs at least one action")
        object.__setattr__(self, "actions", tuple(ActionKind(a) for a in self.actions))

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    @classmethod
    def padded(cls, actions: Sequence[ActionKind], length: int, plan_step: int = 0) -> "ActionChunk":
        """Truncate or pad with NoOp to exactly ``length`` actions."""
        acts = list(actions)[:length]
        acts += [ActionKind.NOOP] * (length - len(acts))
        return cls(tuple(acts), plan_step=plan_step)


class Decision(enum.IntEnum):
    CONTINUE = 0
    ADVANCE = 1
    DONE = 2
    UNRECOVERABLE = 3

    @property
    def carries_subtask(self) -> bool:
        return self in (Decision.CONTINUE, Decision.ADVANCE)


@dataclass(frozen=True)
class GuidancePacket:
    decision: Decision
    subtask_text: str = ""
    goal_image: Optional[Image] = None
    plan_step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decision", Decision(self.decision))
        if self.decision.carries_subtask and not self.subtask_text:
            raise ValueError(f"{self.decision.name} packets need subtask text")
        if not self.decision.carries_subtask:
            if self.subtask_text:
                raise ValueError(f"{self.decision.name} packets carry no subtask text")
            if self.goal_image is not None:
                raise ValueError(f"{self.decision.name} packets carry no goal image")
        if self.plan_step < 0:
            raise ValueError("plan_step must be nonnegative")


@runtime_checkable
class SubtaskPlanner(Protocol):
    def plan(self, task: str, observation: Observation, session_state: Any) -> GuidancePacket: ...


@runtime_checkable
class ForesightGenerator(Protocol):
    def foresee(self, head_image: Image, subtask_text: str, seed: int, scene_digest: Optional[bytes] = None) -> Image: ...


@runtime_checkable
class Policy(Protocol):
    chunk_length: int

    def act(self, observation: Observation, subtask_text: str) -> ActionChunk: ...


def augment_observation(obs: Observation, goal: Optional[Image]) -> Observation:
    """Append ``goal`` to the observation in the reserved goal slot.

    Without a goal the head image is duplicated so the policy always sees
    the same number of cameras.
    """
    if GOAL_SLOT in obs.cameras:
        raise AugmentError("goal slot already occupied")
    head = obs.head
    if goal is None:
        goal = Image(head.width, head.height, head.data)
    elif goal.shape != head.shape:
        raise AugmentError(
            f"goal image {goal.width}x{goal.height} does not match head camera {head.width}x{head.height}"
        )
    cameras = dict(obs.cameras)
    cameras[GOAL_SLOT] = goal
    return replace(obs, cameras=cameras)
