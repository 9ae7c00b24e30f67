"""Wire protocol, gateway relay and cloud services (telemetry + registry)."""

from .frames import (
    MAGIC,
    MAX_PAYLOAD,
    PROTOCOL_VERSION,
    BadMagic,
    BadPayloadJson,
    BadVersion,
    CrcMismatch,
    DecodeError,
    FrameReader,
    LengthOverflow,
    Truncated,
    UnknownType,
    decode_frame,
    encode_frame,
)
from .messages import (
    MESSAGE_CLASSES,
    Alert as AlertMsg,
    BatchAck,
    ErrorMsg,
    Hello,
    HelloAck,
    ModelChunk,
    ModelChunkReq,
    ModelManifest,
    ModelQuery,
    Query,
    Response,
    TelemetryBatch,
    decode,
    encode,
)
from .cloud import CHUNK_SIZE, CloudNode, ModelRegistry, RegistryEntry, TelemetryStore
from .gateway import Gateway

__all__ = [
    "MAGIC", "MAX_PAYLOAD", "PROTOCOL_VERSION",
    "DecodeError", "BadMagic", "BadVersion", "UnknownType", "LengthOverflow",
    "CrcMismatch", "Truncated", "BadPayloadJson",
    "FrameReader", "decode_frame", "encode_frame",
    "MESSAGE_CLASSES", "Hello", "HelloAck", "TelemetryBatch", "BatchAck",
    "ModelQuery", "ModelManifest", "ModelChunkReq", "ModelChunk",
    "AlertMsg", "Query", "Response", "ErrorMsg", "decode", "encode",
    "CHUNK_SIZE", "CloudNode", "ModelRegistry", "RegistryEntry", "TelemetryStore",
    "Gateway",
]
