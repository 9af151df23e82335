"""Cloud side: planner + foresight behind the wire protocol."""
from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Optional

from ..core import Observation
from ..planner import PlanError, RulePlanner, SessionStateError, SessionTable
from . import wire
from .wire import Bye, Err, ErrorCode, Guide, Hello, Obs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StageTimings:
    session_id: int
    step_index: int
    decode_ms: float
    plan_ms: float
    foresee_ms: float
    encode_ms: float
    total_ms: float


def observation_from_wire(msg: Obs) -> Observation:
    return Observation(
        step_index=msg.step_index,
        timestamp_ms=0,
        cameras={c.camera_id: c.image for c in msg.cameras},
        proprio=msg.proprio,
        scene_digest=msg.scene_digest,
    )


class GuidanceService:
    """Per-session planning and foresight; safe to call from many threads.

    Requests for one session are serialized by the session table; different
    sessions proceed independently.
    """

    def __init__(self, planner: Optional[RulePlanner] = None, foresight=None, seed: int = 0):
        self.planner = planner if planner is not None else RulePlanner()
        self.foresight = foresight
        self.seed = seed
        self.sessions = SessionTable()
        self._flags: dict[int, int] = {}
        self._log_lock = threading.Lock()
        self.timings: list[StageTimings] = []

    def _record(self, t: StageTimings) -> None:
        with self._log_lock:
            self.timings.append(t)

    def handle(self, msg: wire.Message) -> tuple[wire.Message, float, float]:
        """Returns the reply plus (plan_ms, foresee_ms) spent on it."""
        if isinstance(msg, Hello):
            self.sessions.open(msg.session_id, msg.task)
            self._flags[msg.session_id] = msg.flags
            return msg, 0.0, 0.0
        if isinstance(msg, Bye):
            self.sessions.close(msg.session_id)
            self._flags.pop(msg.session_id, None)
            return msg, 0.0, 0.0
        if not isinstance(msg, Obs):
            return Err(msg.session_id, ErrorCode.BAD_TYPE, f"{msg.type.name} is not a request"), 0.0, 0.0
        try:
            obs = observation_from_wire(msg)
        except ValueError as exc:
            return Err(msg.session_id, ErrorCode.BAD_PAYLOAD, str(exc)), 0.0, 0.0
        try:
            with self.sessions.acquire(msg.session_id) as session:
                t0 = time.perf_counter()
                error = bad_input = None
                try:
                    resp = self.planner.step(session, obs)
                except SessionStateError as exc:
                    error = exc
                except PlanError as exc:
                    bad_input = exc
                plan_ms = (time.perf_counter() - t0) * 1e3
        except KeyError:
            return Err(msg.session_id, ErrorCode.UNKNOWN_SESSION, "unknown session"), 0.0, 0.0
        if error is not None:
            self.sessions.close(msg.session_id)
            return Err(msg.session_id, ErrorCode.SESSION_STATE, str(error)), plan_ms, 0.0
        if bad_input is not None:
            return Err(msg.session_id, ErrorCode.BAD_PAYLOAD, str(bad_input)), plan_ms, 0.0

        goal = None
        foresee_ms = 0.0
        wants = self._flags.get(msg.session_id, 0) & wire.FLAG_FORESIGHT
        if resp.decision.carries_subtask and wants and self.foresight is not None:
            t0 = time.perf_counter()
            try:
                goal = self.foresight.foresee(obs.head, resp.subtask_text, self.seed + msg.step_index,
                                              obs.scene_digest)
            except ValueError as exc:
                log.warning("foresight failed for session %d: %s", msg.session_id, exc)
                return Err(msg.session_id, ErrorCode.INTERNAL, f"foresight failed: {exc}"), plan_ms, 0.0
            foresee_ms = (time.perf_counter() - t0) * 1e3
        return Guide(msg.session_id, resp.plan_step, resp.decision, resp.subtask_text, goal), plan_ms, foresee_ms

    def handle_frame(self, frame: bytes) -> bytes:
        start = time.perf_counter()
        try:
            msg = wire.decode(frame)
        except wire.WireError as exc:
            return wire.encode(Err(0, exc.code, str(exc)))
        decode_ms = (time.perf_counter() - start) * 1e3
        reply, plan_ms, foresee_ms = self.handle(msg)
        t0 = time.perf_counter()
        out = wire.encode(reply)
        encode_ms = (time.perf_counter() - t0) * 1e3
        if isinstance(msg, Obs):
            total = (time.perf_counter() - start) * 1e3
            self._record(StageTimings(msg.session_id, msg.step_index, decode_ms, plan_ms, foresee_ms, encode_ms, total))
        return out


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: GuidanceService = self.server.service
        while True:
            try:
                frame = wire.read_frame(self.rfile)
            except wire.WireError as exc:
                # The stream cannot be resynchronized after a bad header.
                self.wfile.write(wire.encode(Err(0, exc.code, str(exc))))
                return
            except OSError:
                return
            if frame is None:
                return
            try:
                self.wfile.write(service.handle_frame(frame))
                self.wfile.flush()
            except OSError:
                return


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class ServiceHandle:
    def __init__(self, server: _Server, thread: threading.Thread):
        self._server = server
        self._thread = thread

    @property
    def service(self) -> GuidanceService:
        return self._server.service

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"address must look like host:port, got {text!r}")
    try:
        port_num = int(port)
    except ValueError:
        raise ValueError(f"bad port in {text!r}") from None
    if not 0 <= port_num <= 65535:
        raise ValueError(f"port out of range in {text!r}")
    return host, port_num


def serve(bind_address, planner: Optional[RulePlanner] = None, foresight=None, seed: int = 0) -> ServiceHandle:
    """Start the guidance service on a background thread."""
    if isinstance(bind_address, str):
        bind_address = parse_address(bind_address)
    server = _Server(bind_address, _Handler)
    server.service = GuidanceService(planner, foresight, seed)
    thread = threading.Thread(target=server.serve_forever, name="guidance-service", daemon=True)
    thread.start()
    log.info("guidance service listening on %s:%d", *server.server_address[:2])
    return ServiceHandle(server, thread)


def connect(address, timeout: float = 10.0) -> socket.socket:
    if isinstance(address, str):
        address = parse_address(address)
    return socket.create_connection(address, timeout=timeout)
