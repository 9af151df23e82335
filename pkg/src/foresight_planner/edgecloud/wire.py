"""Binary framing for the edge/cloud guidance protocol (version 1).

Frame header (10 bytes, big-endian)::

    magic "FACT" | version u8 = 1 | msg_type u8 | payload_len u32

Payloads by type::

    HELLO  session u64 | flags u8 (bit0: foresight wanted) | task_len u16 | task utf-8
    OBS    session u64 | step u32 | camera_count u8 | compression u8 (= 0)
           | camera_count x (camera_id u8 | width u16 | height u16 | raw RGB)
           | proprio_len u16 | proprio_len x f64
           | [tag u8 = 1 | digest_len u32 | digest bytes]        (simulation only)
    GUIDE  session u64 | plan_step u32 | decision u8 | text_len u16 | text utf-8
           | goal_flag u8 (0 none, 1 raw image) | [width u16 | height u16 | raw RGB]
    BYE    session u64
    ERR    session u64 | code u8 | msg_len u16 | msg utf-8
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Optional, Union

from ..core import Decision, Image

MAGIC = b"FACT"
VERSION = 1
HEADER = struct.Struct(">4sBBI")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 64 * 1024 * 1024

DIGEST_TAG = 1
FLAG_FORESIGHT = 0x01


class MsgType(enum.IntEnum):
    HELLO = 1
    OBS = 2
    GUIDE = 3
    BYE = 4
    ERR = 5


class ErrorCode(enum.IntEnum):
    BAD_MAGIC = 1
    BAD_VERSION = 2
    TRUNCATED = 3
    BAD_DECISION = 4
    LENGTH_MISMATCH = 5
    BAD_TYPE = 6
    BAD_PAYLOAD = 7
    UNKNOWN_SESSION = 8
    SESSION_STATE = 9
    INTERNAL = 10


class WireError(ValueError):
    code = ErrorCode.BAD_PAYLOAD


class BadMagic(WireError):
    code = ErrorCode.BAD_MAGIC


class BadVersion(WireError):
    code = ErrorCode.BAD_VERSION


class Truncated(WireError):
    code = ErrorCode.TRUNCATED


class BadDecisionCode(WireError):
    code = ErrorCode.BAD_DECISION


class LengthMismatch(WireError):
    code = ErrorCode.LENGTH_MISMATCH


class BadMessageType(WireError):
    code = ErrorCode.BAD_TYPE


class BadPayload(WireError):
    code = ErrorCode.BAD_PAYLOAD


@dataclass(frozen=True)
class Hello:
    session_id: int
    task: str
    flags: int = FLAG_FORESIGHT
    type = MsgType.HELLO


@dataclass(frozen=True)
class Camera:
    camera_id: int
    image: Image


@dataclass(frozen=True)
class Obs:
    session_id: int
    step_index: int
    cameras: tuple[Camera, ...]
    proprio: tuple[float, ...] = ()
    scene_digest: Optional[bytes] = None
    type = MsgType.OBS


@dataclass(frozen=True)
class Guide:
    session_id: int
    plan_step: int
    decision: Decision
    text: str = ""
    goal_image: Optional[Image] = None
    type = MsgType.GUIDE


@dataclass(frozen=True)
class Bye:
    session_id: int
    type = MsgType.BYE


@dataclass(frozen=True)
class Err:
    session_id: int
    code: int
    message: str = ""
    type = MsgType.ERR


Message = Union[Hello, Obs, Guide, Bye, Err]


# -- encoding ----------------------------------------------------------------------

def _text(s: str, width: str = ">H") -> bytes:
    raw = s.encode("utf-8")
    limit = (1 << (8 * struct.calcsize(width))) - 1
    if len(raw) > limit:
        raise ValueError("text field too long")
    return struct.pack(width, len(raw)) + raw


def _image(img: Image) -> bytes:
    return struct.pack(">HH", img.width, img.height) + img.data


def encode_payload(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        return struct.pack(">QB", msg.session_id, msg.flags) + _text(msg.task)
    if isinstance(msg, Obs):
        parts = [struct.pack(">QIBB", msg.session_id, msg.step_index, len(msg.cameras), 0)]
        for cam in msg.cameras:
            parts.append(struct.pack(">B", cam.camera_id) + _image(cam.image))
        parts.append(struct.pack(f">H{len(msg.proprio)}d", len(msg.proprio), *msg.proprio))
        if msg.scene_digest is not None:
            parts.append(struct.pack(">BI", DIGEST_TAG, len(msg.scene_digest)) + msg.scene_digest)
        return b"".join(parts)
    if isinstance(msg, Guide):
        out = struct.pack(">QIB", msg.session_id, msg.plan_step, int(msg.decision)) + _text(msg.text)
        if msg.goal_image is None:
            return out + b"\x00"
        return out + b"\x01" + _image(msg.goal_image)
    if isinstance(msg, Bye):
        return struct.pack(">Q", msg.session_id)
    if isinstance(msg, Err):
        return struct.pack(">QB", msg.session_id, msg.code) + _text(msg.message)
    raise TypeError(f"not a wire message: {msg!r}")


def encode(msg: Message) -> bytes:
    payload = encode_payload(msg)
    return HEADER.pack(MAGIC, VERSION, int(msg.type), len(payload)) + payload


# -- decoding ----------------------------------------------------------------------

class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise LengthMismatch(f"field of {n} bytes overruns payload at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def text(self) -> str:
        (n,) = self.unpack(">H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BadPayload("invalid UTF-8 text") from exc

    def image(self) -> Image:
        w, h = self.unpack(">HH")
        if w == 0 or h == 0:
            raise BadPayload("zero-sized image")
        return Image(w, h, self.take(w * h * 3))

    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise LengthMismatch(f"{len(self.buf) - self.pos} trailing payload bytes")


def decode_payload(msg_type: int, payload: bytes) -> Message:
    r = _Reader(payload)
    if msg_type == MsgType.HELLO:
        sid, flags = r.unpack(">QB")
        msg = Hello(sid, r.text(), flags)
    elif msg_type == MsgType.OBS:
        sid, step, count, compression = r.unpack(">QIBB")
        if compression != 0:
            raise BadPayload("compressed observations are not supported in version 1")
        cams = []
        for _ in range(count):
            (cid,) = r.unpack(">B")
            cams.append(Camera(cid, r.image()))
        (n,) = r.unpack(">H")
        proprio = r.unpack(f">{n}d")
        digest = None
        if r.remaining():
            tag, length = r.unpack(">BI")
            if tag != DIGEST_TAG:
                raise BadPayload(f"unknown optional block tag {tag}")
            digest = r.take(length)
        msg = Obs(sid, step, tuple(cams), tuple(proprio), digest)
    elif msg_type == MsgType.GUIDE:
        sid, plan_step, code = r.unpack(">QIB")
        if code > max(Decision):
            raise BadDecisionCode(f"decision code {code} out of range")
        text = r.text()
        (flag,) = r.unpack(">B")
        if flag not in (0, 1):
            raise BadPayload(f"unsupported goal flag {flag}")
        goal = r.image() if flag == 1 else None
        msg = Guide(sid, plan_step, Decision(code), text, goal)
    elif msg_type == MsgType.BYE:
        (sid,) = r.unpack(">Q")
        msg = Bye(sid)
    elif msg_type == MsgType.ERR:
        sid, code = r.unpack(">QB")
        msg = Err(sid, code, r.text())
    else:
        raise BadMessageType(f"unknown message type {msg_type}")
    r.done()
    return msg


def parse_header(data: bytes) -> tuple[int, int]:
    """Validate a frame header; returns (msg_type, payload_len)."""
    if len(data) < 4:
        if MAGIC.startswith(bytes(data)):
            raise Truncated("incomplete header")
        raise BadMagic("bad magic")
    if bytes(data[:4]) != MAGIC:
        raise BadMagic(f"bad magic {bytes(data[:4])!r}")
    if len(data) < 5:
        raise Truncated("incomplete header")
    if data[4] != VERSION:
        raise BadVersion(f"unsupported version {data[4]}")
    if len(data) < HEADER_SIZE:
        raise Truncated("incomplete header")
    _, _, msg_type, length = HEADER.unpack(bytes(data[:HEADER_SIZE]))
    if length > MAX_PAYLOAD:
        raise LengthMismatch(f"declared payload of {length} bytes exceeds limit")
    return msg_type, length


def decode_frame(data: bytes) -> tuple[Message, int]:
    """Decode the first frame in ``data``; returns the message and bytes consumed.

    Never reads past the declared frame, so trailing bytes belong to the
    next frame.
    """
    msg_type, length = parse_header(data)
    end = HEADER_SIZE + length
    if len(data) < end:
        raise Truncated(f"payload needs {length} bytes, {len(data) - HEADER_SIZE} available")
    return decode_payload(msg_type, bytes(data[HEADER_SIZE:end])), end


def decode(data: bytes) -> Message:
    """Decode exactly one frame."""
    msg, used = decode_frame(data)
    if used != len(data):
        raise LengthMismatch(f"{len(data) - used} bytes after the frame")
    return msg


def read_frame(stream) -> Optional[bytes]:
    """Read one whole frame from a binary file-like object; None on clean EOF."""
    head = _read_exact(stream, HEADER_SIZE)
    if not head:
        return None
    if len(head) < HEADER_SIZE:
        parse_header(head)
        raise Truncated("stream ended inside a header")
    _, length = parse_header(head)
    payload = _read_exact(stream, length)
    if len(payload) < length:
        raise Truncated("stream ended inside a payload")
    return head + payload


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            break
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)
