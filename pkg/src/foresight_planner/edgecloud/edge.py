"""Edge side: capture, request guidance, augment, act.

The loop is strictly sequential, so there is never more than one guidance
request in flight.
"""
from __future__ import annotations

import enum
import logging
import socket
from dataclasses import dataclass, field, replace
from typing import Optional

from ..core import ActionKind, Decision, GuidancePacket, augment_observation
from ..gridworld.env import observe
from ..gridworld.render import DEFAULT_CELL_PIXELS
from ..gridworld.scene import Scene, step
from . import wire
from .service import GuidanceService, connect
from .wire import Bye, Camera, Err, Guide, Hello, Obs

log = logging.getLogger(__name__)


class TransportError(ConnectionError):
    pass


class InProcessTransport:
    """Calls the service directly but still goes through the byte codec.

    ``tee``, when given, receives every frame sent and received, in order.
    """

    def __init__(self, service: GuidanceService, tee: Optional[list] = None):
        self.service = service
        self.tee = tee

    def request(self, msg: wire.Message) -> wire.Message:
        frame = wire.encode(msg)
        reply = self.service.handle_frame(frame)
        if self.tee is not None:
            self.tee.extend([frame, reply])
        return wire.decode(reply)

    def reset(self) -> None:
        pass

    def close(self) -> None:
        pass


class SocketTransport:
    def __init__(self, address, timeout: float = 30.0, tee: Optional[list] = None):
        self.address = address
        self.timeout = timeout
        self.tee = tee
        self._sock: Optional[socket.socket] = None
        self._file = None

    def _ensure(self) -> None:
        if self._sock is None:
            try:
                self._sock = connect(self.address, self.timeout)
            except OSError as exc:
                raise TransportError(f"cannot connect to {self.address}: {exc}") from exc
            self._file = self._sock.makefile("rb")

    def request(self, msg: wire.Message) -> wire.Message:
        frame = wire.encode(msg)
        self._ensure()
        try:
            self._sock.sendall(frame)
            reply = wire.read_frame(self._file)
        except (OSError, wire.Truncated) as exc:
            self.reset()
            raise TransportError(str(exc)) from exc
        if reply is None:
            self.reset()
            raise TransportError("connection closed by the service")
        if self.tee is not None:
            self.tee.extend([frame, reply])
        return wire.decode(reply)

    def reset(self) -> None:
        if self._file is not None:
            self._file.close()
        if self._sock is not None:
            self._sock.close()
        self._sock = self._file = None

    def close(self) -> None:
        self.reset()


@dataclass(frozen=True)
class LoopConfig:
    max_chunks_per_subtask: int = 40
    guidance_every_chunk: bool = True
    foresight_enabled: bool = True
    planner_text_enabled: bool = True
    cell_pixels: int = DEFAULT_CELL_PIXELS
    step_rate: float = 10.0

    def __post_init__(self):
        if self.max_chunks_per_subtask < 1:
            raise ValueError("max_chunks_per_subtask must be at least 1")


ABLATIONS = {
    "full": LoopConfig(),
    "text-only": LoopConfig(foresight_enabled=False),
    "task-only": LoopConfig(foresight_enabled=False, planner_text_enabled=False),
}


class Termination(enum.Enum):
    DONE = "Done"
    UNRECOVERABLE = "Unrecoverable"
    CHUNK_BUDGET = "ChunkBudget"
    TRANSPORT_FAILURE = "TransportFailure"
    PROTOCOL_ERROR = "ProtocolError"


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    chunk_index: int
    plan_step: int
    subtask_text: str
    action: ActionKind
    before: Scene
    after: Scene


@dataclass
class EpisodeResult:
    final_scene: Scene
    termination: Termination
    steps: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # GuidancePacket per response
    chunks: int = 0
    stale_chunks: int = 0
    detail: str = ""

    @property
    def done(self) -> bool:
        return self.termination is Termination.DONE


def _obs_message(session_id: int, obs) -> Obs:
    cams = tuple(Camera(cid, img) for cid, img in obs.cameras.items())
    return Obs(session_id, obs.step_index, cams, obs.proprio, obs.scene_digest)


def _request(transport, msg: wire.Message) -> wire.Message:
    try:
        return transport.request(msg)
    except TransportError as exc:
        log.warning("guidance request failed (%s); retrying once", exc)
        transport.reset()
        return transport.request(msg)


def run_edge_loop(scene: Scene, task: str, policy, transport, config: LoopConfig = LoopConfig(),
                  session_id: int = 1) -> EpisodeResult:
    result = EpisodeResult(final_scene=scene, termination=Termination.PROTOCOL_ERROR)

    def finish(reason: Termination, detail: str = "") -> EpisodeResult:
        result.final_scene = scene
        result.termination = reason
        result.detail = detail
        return result

    flags = wire.FLAG_FORESIGHT if config.foresight_enabled else 0
    try:
        reply = _request(transport, Hello(session_id, task, flags))
    except TransportError as exc:
        return finish(Termination.TRANSPORT_FAILURE, str(exc))
    except wire.WireError as exc:
        return finish(Termination.PROTOCOL_ERROR, f"undecodable reply: {exc}")
    if not isinstance(reply, Hello) or reply.session_id != session_id:
        return finish(Termination.PROTOCOL_ERROR, f"unexpected reply to HELLO: {reply!r}")

    step_index = 0
    packet: Optional[GuidancePacket] = None
    chunks_this_step = 0
    want_guidance = True
    try:
        while True:
            obs = observe(scene, step_index, config.step_rate, config.cell_pixels)
            if want_guidance or config.guidance_every_chunk:
                reply = _request(transport, _obs_message(session_id, obs))
                if isinstance(reply, Err):
                    return finish(Termination.PROTOCOL_ERROR, f"service error {reply.code}: {reply.message}")
                if not isinstance(reply, Guide) or reply.session_id != session_id:
                    return finish(Termination.PROTOCOL_ERROR, f"unexpected reply to OBS: {reply!r}")
                if packet is None or reply.plan_step != packet.plan_step:
                    chunks_this_step = 0
                packet = GuidancePacket(reply.decision, reply.text, reply.goal_image, reply.plan_step)
                result.trace.append(packet)
                if packet.decision is Decision.DONE:
                    return finish(Termination.DONE)
                if packet.decision is Decision.UNRECOVERABLE:
                    return finish(Termination.UNRECOVERABLE)
            if chunks_this_step >= config.max_chunks_per_subtask:
                return finish(Termination.CHUNK_BUDGET, f"plan step {packet.plan_step}")

            goal = packet.goal_image if config.foresight_enabled else None
            text = packet.subtask_text if config.planner_text_enabled else task
            chunk = policy.act(augment_observation(obs, goal), text)
            chunk = replace(chunk, plan_step=packet.plan_step)
            # Only actions issued under the latest guidance may run.
            if chunk.plan_step < packet.plan_step:
                result.stale_chunks += 1
                continue
            for action in chunk:
                after = step(scene, action)
                result.steps.append(StepRecord(step_index, result.chunks, packet.plan_step,
                                               packet.subtask_text, action, scene, after))
                scene = after
                step_index += 1
            result.chunks += 1
            chunks_this_step += 1
            want_guidance = all(a is ActionKind.NOOP for a in chunk)
    except TransportError as exc:
        return finish(Termination.TRANSPORT_FAILURE, str(exc))
    except wire.WireError as exc:
        return finish(Termination.PROTOCOL_ERROR, f"undecodable reply: {exc}")
    finally:
        try:
            transport.request(Bye(session_id))
        except (TransportError, wire.WireError):
            pass
