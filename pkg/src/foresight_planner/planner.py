"""Reason-execute-monitor subtask planner.

The first request of a session decomposes the task and returns the first
subtask. Each later request checks whether the ongoing subtask is complete:
if so the next subtask is issued (or the session finishes), otherwise the
ongoing instruction is repeated verbatim. A subtask that is still incomplete
after ``retry_cap`` repetitions ends the session as unrecoverable.

Task grammar of the rule-based planner (clauses joined by ``", then "``)::

    clean the table
    put the <obj>[, the <obj>...][ and the <obj>] in|on the [<color>] <kind>
    pick up the <obj>
    close the [<color>] drawer
"""
from __future__ import annotations

import enum
import hashlib
import re
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .core import Decision, GuidancePacket, Observation
from .gridworld.expert import simulate_subtask
from .gridworld.grammar import (
    GrammarError,
    InfeasibleError,
    Instruction,
    ObjectRef,
    RegionRef,
    is_complete,
    parse_instruction,
    put_instruction,
)
from .gridworld.scene import COLORS, REGION_KINDS, SHAPES, Scene

DEFAULT_RETRY_CAP = 5


class PlanError(ValueError):
    """The task cannot be planned; the session ends as unrecoverable."""

    decision = Decision.UNRECOVERABLE


class SessionStateError(RuntimeError):
    pass


class Phase(enum.Enum):
    INIT = "Init"
    EXECUTING = "Executing"
    FINISHED = "Finished"
    FAILED = "Failed"


@dataclass(frozen=True)
class PlanRequest:
    session_id: int
    observation: Observation
    task: Optional[str] = None


@dataclass(frozen=True)
class PlanResponse:
    decision: Decision
    subtask_text: str
    plan_step: int

    def packet(self, goal_image=None) -> GuidancePacket:
        return GuidancePacket(self.decision, self.subtask_text, goal_image, self.plan_step)


@dataclass
class PlannerSession:
    task: str
    session_id: int = 0
    phase: Phase = Phase.INIT
    current_subtask: Optional[str] = None
    plan_step: int = 0
    repeats_of_current: int = 0
    plan: list = field(default_factory=list)
    plan_index: int = 0
    history: list = field(default_factory=list)


# -- task decomposition ---------------------------------------------------------

_COLOR = "|".join(COLORS)
_OBJ = rf"(?:{_COLOR}) (?:{'|'.join(SHAPES)})"
_PUT_MANY = re.compile(
    rf"^put (the {_OBJ}(?:, the {_OBJ})*(?:,? and the {_OBJ})?) (?:in|on) the ((?:(?:{_COLOR}) )?(?:{'|'.join(REGION_KINDS)}))$"
)


def _object_refs(listing: str) -> list[ObjectRef]:
    refs = []
    for phrase in re.findall(rf"the ({_OBJ})", listing):
        color, shape = phrase.split()
        refs.append(ObjectRef(COLORS.index(color), SHAPES.index(shape)))
    return refs


def _region_ref(phrase: str) -> RegionRef:
    words = phrase.split()
    return RegionRef(words[-1], COLORS.index(words[0]) if len(words) == 2 else None)


def _expand_clause(clause: str, scene: Scene) -> list[str]:
    if clause == "clean the table":
        bins = [r for r in scene.regions if r.kind == "bin"]
        if not bins:
            raise InfeasibleError("no bin to clean the table into")
        return [put_instruction(o, bins[0]) for o in scene.loose_objects()]
    if m := _PUT_MANY.match(clause):
        region = _region_ref(m[2])
        return [Instruction("put", ref, region).text for ref in _object_refs(m[1])]
    return [parse_instruction(clause).text]


def decompose_task(task: str, scene: Scene) -> list[str]:
    """Ordered subtask instructions that complete ``task`` from ``scene``.

    Subtasks already satisfied when they would start are left out.
    """
    text = " ".join(task.strip().lower().rstrip(".").split())
    if not text:
        raise PlanError("empty task")
    plan = []
    for clause in text.split(", then "):
        try:
            subtasks = _expand_clause(clause, scene)
        except GrammarError as exc:
            raise PlanError(f"cannot parse task clause {clause!r}") from exc
        for sub in subtasks:
            if is_complete(scene, sub):
                continue
            scene = simulate_subtask(scene, sub)
            plan.append(sub)
    return plan


def completion_predicate(subtask_text: str, scene_digest: bytes) -> bool:
    return is_complete(Scene.from_digest(scene_digest), parse_instruction(subtask_text))


# -- the planner ------------------------------------------------------------------

def _observation_digest(obs: Observation) -> str:
    h = hashlib.sha256(obs.head.data)
    if obs.scene_digest is not None:
        h.update(obs.scene_digest)
    return h.hexdigest()[:16]


class RulePlanner:
    """Reference planner over the symbolic scene digest carried by observations."""

    def __init__(self, retry_cap: int = DEFAULT_RETRY_CAP):
        if retry_cap < 0:
            raise ValueError("retry_cap must be nonnegative")
        self.retry_cap = retry_cap

    @staticmethod
    def _scene(obs: Observation) -> Scene:
        if obs.scene_digest is None:
            raise PlanError("the rule planner needs the scene digest")
        return Scene.from_digest(obs.scene_digest)

    def _respond(self, session: PlannerSession, obs: Observation, decision: Decision) -> PlanResponse:
        text = session.current_subtask if decision.carries_subtask else ""
        session.history.append((_observation_digest(obs), decision))
        return PlanResponse(decision, text, session.plan_step)

    def _fail(self, session: PlannerSession, obs: Observation) -> PlanResponse:
        session.phase = Phase.FAILED
        session.current_subtask = None
        return self._respond(session, obs, Decision.UNRECOVERABLE)

    def _advance(self, session: PlannerSession, obs: Observation, scene: Scene, bump: bool) -> PlanResponse:
        while session.plan_index < len(session.plan) and is_complete(scene, session.plan[session.plan_index]):
            session.plan_index += 1
        session.repeats_of_current = 0
        if session.plan_index >= len(session.plan):
            session.phase = Phase.FINISHED
            session.current_subtask = None
            return self._respond(session, obs, Decision.DONE)
        session.current_subtask = session.plan[session.plan_index]
        session.plan_index += 1
        if bump:
            session.plan_step += 1
        return self._respond(session, obs, Decision.ADVANCE)

    def plan_first(self, session: PlannerSession, obs: Observation) -> PlanResponse:
        if session.phase is not Phase.INIT:
            raise SessionStateError(f"plan_first on a session in phase {session.phase.value}")
        try:
            scene = self._scene(obs)
            session.plan = decompose_task(session.task, scene)
        except (PlanError, InfeasibleError):
            return self._fail(session, obs)
        session.phase = Phase.EXECUTING
        session.plan_step = 0
        return self._advance(session, obs, scene, bump=False)

    def monitor(self, session: PlannerSession, obs: Observation) -> PlanResponse:
        if session.phase is not Phase.EXECUTING:
            raise SessionStateError(f"monitor on a session in phase {session.phase.value}")
        scene = self._scene(obs)
        if is_complete(scene, session.current_subtask):
            return self._advance(session, obs, scene, bump=True)
        if session.repeats_of_current >= self.retry_cap:
            return self._fail(session, obs)
        session.repeats_of_current += 1
        return self._respond(session, obs, Decision.CONTINUE)

    def step(self, session: PlannerSession, obs: Observation) -> PlanResponse:
        if session.phase is Phase.INIT:
            return self.plan_first(session, obs)
        return self.monitor(session, obs)

    def plan(self, task: str, observation: Observation, session_state: PlannerSession) -> GuidancePacket:
        if session_state.task != task:
            raise SessionStateError("task does not match the session")
        return self.step(session_state, observation).packet()


class SessionTable:
    """Planner sessions keyed by id, each guarded by its own lock."""

    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: dict[int, tuple[PlannerSession, threading.Lock]] = {}

    def open(self, session_id: int, task: str) -> PlannerSession:
        with self._lock:
            session = PlannerSession(task=task, session_id=session_id)
            self._sessions[session_id] = (session, threading.Lock())
            return session

    def close(self, session_id: int) -> None:
        with self._lock:
            self._sessions.pop(session_id, None)

    def __contains__(self, session_id: int) -> bool:
        with self._lock:
            return session_id in self._sessions

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)

    @contextmanager
    def acquire(self, session_id: int) -> Iterator[PlannerSession]:
        with self._lock:
            entry = self._sessions.get(session_id)
        if entry is None:
            raise KeyError(session_id)
        session, lock = entry
        with lock:
            yield session
