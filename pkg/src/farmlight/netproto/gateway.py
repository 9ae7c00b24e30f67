"""Gateway relay between edges and the cloud.

The gateway owns no protocol semantics: it re-validates each frame (CRC,
size, schema) and forwards the bytes verbatim, keeping a per-edge session
table and a traffic log. Malformed frames draw an ERROR reply to the sender
and never terminate the session.

Transport-neutral: callers hand frames in via ``from_edge``/``from_cloud``
and supply callables that move bytes toward each side.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from . import messages as msg
from .frames import DecodeError, LengthOverflow, decode_frame


@dataclass
class SessionInfo:
    edge_key: str
    node_id: str | None = None
    frames_relayed: int = 0
    errors: int = 0


@dataclass
class LogLine:
    ts_ms: int
    direction: str  # edge->cloud | cloud->edge
    msg_type: int
    payload_len: int
    edge_key: str


class Gateway:
    def __init__(self, node_id: str = "gateway-0"):
        self.node_id = node_id
        self.sessions: dict = {}
        self.log: list = []
        self._lock = threading.Lock()

    def _session(self, edge_key: str) -> SessionInfo:
        with self._lock:
            return self.sessions.setdefault(edge_key, SessionInfo(edge_key=edge_key))

    def _validate(self, raw: bytes) -> tuple:
        """Returns (message, None) or (None, ERROR reply bytes)."""
        try:
            msg_type, payload, total = decode_frame(raw)
            if total != len(raw):
                raise DecodeError(f"{len(raw) - total} trailing bytes")
            message = msg.parse_payload(msg_type, payload)
            return message, None
        except LengthOverflow as exc:
            return None, msg.encode(msg.ErrorMsg(code="oversize", detail=str(exc)))
        except DecodeError as exc:
            return None, msg.encode(msg.ErrorMsg(code="bad_frame", detail=str(exc)))

    def from_edge(self, edge_key: str, raw: bytes, to_cloud, to_edge,
                  now_ms: int = 0) -> None:
        """Relay one edge frame cloudward; ERROR back to the edge if malformed."""
        session = self._session(edge_key)
        message, error_reply = self._validate(raw)
        if message is None:
            session.errors += 1
            to_edge(error_reply)
            return
        if isinstance(message, msg.Hello):
            session.node_id = message.node_id
        session.frames_relayed += 1
        with self._lock:
            self.log.append(LogLine(ts_ms=now_ms, direction="edge->cloud",
                                    msg_type=message.TYPE, payload_len=len(raw) - 14,
                                    edge_key=edge_key))
        to_cloud(raw)

    def from_cloud(self, edge_key: str, raw: bytes, to_edge,
                   now_ms: int = 0) -> None:
        """Relay one cloud frame back to its edge; malformed frames are dropped."""
        session = self._session(edge_key)
        message, _ = self._validate(raw)
        if message is None:
            session.errors += 1
            return
        session.frames_relayed += 1
        with self._lock:
            self.log.append(LogLine(ts_ms=now_ms, direction="cloud->edge",
                                    msg_type=message.TYPE, payload_len=len(raw) - 14,
                                    edge_key=edge_key))
        to_edge(raw)
