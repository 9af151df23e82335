"""Cloud/edge split: wire codec, guidance service and the edge control loop."""
from .edge import (
    ABLATIONS,
    EpisodeResult,
    InProcessTransport,
    LoopConfig,
    SocketTransport,
    StepRecord,
    Termination,
    TransportError,
    run_edge_loop,
)
from .service import GuidanceService, ServiceHandle, StageTimings, connect, parse_address, serve
from .wire import decode, decode_frame, encode

__all__ = [
    "ABLATIONS", "EpisodeResult", "GuidanceService", "InProcessTransport", "LoopConfig", "ServiceHandle",
    "SocketTransport", "StageTimings", "StepRecord", "Termination", "TransportError", "connect", "decode",
    "decode_frame", "encode", "parse_address", "run_edge_loop", "serve",
]
