"""The twelve message types riding on the frame layer.

Payloads are canonical JSON except for two composites that carry raw bytes
after a JSON header (u32 big-endian header length, then the header, then the
bytes): TELEMETRY_BATCH, whose records ride as a raw-DEFLATE-compressed
canonical-JSON array, and MODEL_CHUNK, whose artifact slice stays raw.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, fields

from .. import jsoncanon
from .frames import BadPayloadJson, decode_frame, encode_frame

DEFLATE_LEVEL = 6


def _compress(data: bytes) -> bytes:
    # Raw DEFLATE (RFC 1951): negative wbits strips the zlib wrapper.
    c = zlib.compressobj(DEFLATE_LEVEL, zlib.DEFLATED, -15)
    return c.compress(data) + c.flush()


def _decompress(data: bytes) -> bytes:
    try:
        return zlib.decompress(data, wbits=-15)
    except zlib.error as exc:
        raise BadPayloadJson(f"records segment is not valid DEFLATE: {exc}") from exc


def _json_payload(payload: bytes) -> dict:
    try:
        doc = jsoncanon.loads(payload)
    except ValueError as exc:
        raise BadPayloadJson(str(exc)) from exc
    if not isinstance(doc, dict):
        raise BadPayloadJson(f"payload is {type(doc).__name__}, expected object")
    return doc


def _take(doc: dict, key: str, kinds, optional: bool = False):
    if key not in doc:
        if optional:
            return None
        raise BadPayloadJson(f"missing field {key!r}")
    value = doc[key]
    if value is None and optional:
        return None
    if not isinstance(value, kinds) or isinstance(value, bool) and kinds is int:
        raise BadPayloadJson(f"field {key!r} has type {type(value).__name__}")
    return value


def _split_composite(payload: bytes) -> tuple[dict, bytes]:
    if len(payload) < 4:
        raise BadPayloadJson("composite payload shorter than its header length field")
    header_len = int.from_bytes(payload[:4], "big")
    if len(payload) < 4 + header_len:
        raise BadPayloadJson(
            f"composite header declares {header_len} bytes, payload has {len(payload) - 4}")
    return _json_payload(payload[4:4 + header_len]), payload[4 + header_len:]


def _join_composite(header: dict, raw: bytes) -> bytes:
    header_json = jsoncanon.dumps_bytes(header)
    return len(header_json).to_bytes(4, "big") + header_json + raw


@dataclass(frozen=True)
class Hello:
    TYPE = 0x01
    node_id: str
    role: str  # edge | gateway | cloud

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"node_id": self.node_id, "role": self.role})

    @classmethod
    def from_payload(cls, payload: bytes) -> "Hello":
        doc = _json_payload(payload)
        return cls(node_id=_take(doc, "node_id", str), role=_take(doc, "role", str))


@dataclass(frozen=True)
class HelloAck:
    TYPE = 0x02
    session_id: str

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"session_id": self.session_id})

    @classmethod
    def from_payload(cls, payload: bytes) -> "HelloAck":
        return cls(session_id=_take(_json_payload(payload), "session_id", str))


@dataclass(frozen=True)
class TelemetryBatch:
    TYPE = 0x03
    batch_id: str
    edge_id: str
    records: tuple  # of JSON-compatible dicts

    def to_payload(self) -> bytes:
        header = {"batch_id": self.batch_id, "count": len(self.records),
                  "edge_id": self.edge_id}
        blob = _compress(jsoncanon.dumps_bytes(list(self.records)))
        return _join_composite(header, blob)

    @classmethod
    def from_payload(cls, payload: bytes) -> "TelemetryBatch":
        header, blob = _split_composite(payload)
        batch_id = _take(header, "batch_id", str)
        edge_id = _take(header, "edge_id", str)
        count = _take(header, "count", int)
        try:
            records = jsoncanon.loads(_decompress(blob))
        except ValueError as exc:
            raise BadPayloadJson(f"records are not valid JSON: {exc}") from exc
        if not isinstance(records, list) or not all(isinstance(r, dict) for r in records):
            raise BadPayloadJson("records must be a JSON array of objects")
        if len(records) != count:
            raise BadPayloadJson(f"header count {count} != {len(records)} records")
        return cls(batch_id=batch_id, edge_id=edge_id, records=tuple(records))


@dataclass(frozen=True)
class BatchAck:
    TYPE = 0x04
    batch_id: str

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"batch_id": self.batch_id})

    @classmethod
    def from_payload(cls, payload: bytes) -> "BatchAck":
        return cls(batch_id=_take(_json_payload(payload), "batch_id", str))


@dataclass(frozen=True)
class ModelQuery:
    TYPE = 0x05
    current_version_id: str | None

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"current_version_id": self.current_version_id})

    @classmethod
    def from_payload(cls, payload: bytes) -> "ModelQuery":
        doc = _json_payload(payload)
        return cls(current_version_id=_take(doc, "current_version_id", str, optional=True))


@dataclass(frozen=True)
class ModelManifest:
    TYPE = 0x06
    version_id: str
    total_bytes: int
    chunk_size: int
    chunk_count: int
    sha256_hex: str

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({
            "version_id": self.version_id, "total_bytes": self.total_bytes,
            "chunk_size": self.chunk_size, "chunk_count": self.chunk_count,
            "sha256_hex": self.sha256_hex,
        })

    @classmethod
    def from_payload(cls, payload: bytes) -> "ModelManifest":
        doc = _json_payload(payload)
        return cls(
            version_id=_take(doc, "version_id", str),
            total_bytes=_take(doc, "total_bytes", int),
            chunk_size=_take(doc, "chunk_size", int),
            chunk_count=_take(doc, "chunk_count", int),
            sha256_hex=_take(doc, "sha256_hex", str),
        )


@dataclass(frozen=True)
class ModelChunkReq:
    TYPE = 0x07
    version_id: str
    index: int

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"version_id": self.version_id, "index": self.index})

    @classmethod
    def from_payload(cls, payload: bytes) -> "ModelChunkReq":
        doc = _json_payload(payload)
        return cls(version_id=_take(doc, "version_id", str),
                   index=_take(doc, "index", int))


@dataclass(frozen=True)
class ModelChunk:
    TYPE = 0x08
    version_id: str
    index: int
    chunk: bytes

    def to_payload(self) -> bytes:
        return _join_composite(
            {"index": self.index, "version_id": self.version_id}, self.chunk)

    @classmethod
    def from_payload(cls, payload: bytes) -> "ModelChunk":
        header, raw = _split_composite(payload)
        return cls(version_id=_take(header, "version_id", str),
                   index=_take(header, "index", int), chunk=raw)


@dataclass(frozen=True)
class Alert:
    TYPE = 0x09
    alert: dict  # edge Alert record, already JSON-shaped

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"alert": self.alert})

    @classmethod
    def from_payload(cls, payload: bytes) -> "Alert":
        return cls(alert=_take(_json_payload(payload), "alert", dict))


@dataclass(frozen=True)
class Query:
    TYPE = 0x0A
    text: str
    obs_id: str | None = None

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"text": self.text, "obs_id": self.obs_id})

    @classmethod
    def from_payload(cls, payload: bytes) -> "Query":
        doc = _json_payload(payload)
        return cls(text=_take(doc, "text", str),
                   obs_id=_take(doc, "obs_id", str, optional=True))


@dataclass(frozen=True)
class Response:
    TYPE = 0x0B
    diagnosis: dict

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"diagnosis": self.diagnosis})

    @classmethod
    def from_payload(cls, payload: bytes) -> "Response":
        return cls(diagnosis=_take(_json_payload(payload), "diagnosis", dict))


@dataclass(frozen=True)
class ErrorMsg:
    TYPE = 0x0C
    code: str
    detail: str

    def to_payload(self) -> bytes:
        return jsoncanon.dumps_bytes({"code": self.code, "detail": self.detail})

    @classmethod
    def from_payload(cls, payload: bytes) -> "ErrorMsg":
        doc = _json_payload(payload)
        return cls(code=_take(doc, "code", str), detail=_take(doc, "detail", str))


MESSAGE_CLASSES = {
    cls.TYPE: cls
    for cls in (Hello, HelloAck, TelemetryBatch, BatchAck, ModelQuery, ModelManifest,
                ModelChunkReq, ModelChunk, Alert, Query, Response, ErrorMsg)
}


def encode(msg) -> bytes:
    return encode_frame(msg.TYPE, msg.to_payload())


def parse_payload(msg_type: int, payload: bytes):
    cls = MESSAGE_CLASSES.get(msg_type)
    if cls is None:  # decode_frame already bounds msg_type; belt and braces
        raise BadPayloadJson(f"no schema for message type 0x{msg_type:02x}")
    return cls.from_payload(payload)


def decode(data: bytes):
    """Decode exactly one frame into a message; trailing bytes are an error."""
    msg_type, payload, total = decode_frame(data)
    if total != len(data):
        raise BadPayloadJson(f"{len(data) - total} trailing bytes after frame")
    return parse_payload(msg_type, payload)


def message_fields(msg) -> dict:
    return {f.name: getattr(msg, f.name) for f in fields(msg)}
