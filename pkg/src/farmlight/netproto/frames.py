"""Frame layer of the wire protocol.

Layout (integers big-endian):

    magic       4 bytes  "FLSK"
    version     u8       0x01
    msg_type    u8
    payload_len u32      <= 1,048,576
    payload     payload_len bytes
    crc         u32      CRC-32 (IEEE 802.3) over msg_type byte ++ payload

Decoding is total: any byte string maps to a message or to one of the
structured errors below, never to an uncaught exception.
"""

from __future__ import annotations

import zlib

from ..domain import FarmlightError

MAGIC = b"FLSK"
PROTOCOL_VERSION = 0x01
MAX_PAYLOAD = 1_048_576
HEADER_LEN = 10  # magic + version + msg_type + payload_len
CRC_LEN = 4

MIN_TYPE = 0x01
MAX_TYPE = 0x0C


class DecodeError(FarmlightError):
    """Base class for every way a byte string can fail to be a frame."""


class BadMagic(DecodeError):
    pass


class BadVersion(DecodeError):
    pass


class UnknownType(DecodeError):
    pass


class LengthOverflow(DecodeError):
    pass


class CrcMismatch(DecodeError):
    pass


class Truncated(DecodeError):
    pass


class BadPayloadJson(DecodeError):
    """Payload bytes violate the message-type schema."""


def crc32(msg_type: int, payload: bytes) -> int:
    return zlib.crc32(bytes([msg_type]) + payload) & 0xFFFFFFFF


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if not MIN_TYPE <= msg_type <= MAX_TYPE:
        raise UnknownType(f"message type 0x{msg_type:02x} outside 0x01..0x0c")
    if len(payload) > MAX_PAYLOAD:
        raise LengthOverflow(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return (
        MAGIC
        + bytes([PROTOCOL_VERSION, msg_type])
        + len(payload).to_bytes(4, "big")
        + payload
        + crc32(msg_type, payload).to_bytes(4, "big")
    )


def decode_frame(data: bytes) -> tuple[int, bytes, int]:
    """Parse one frame from the start of ``data``.

    Returns (msg_type, payload, total frame length). Validation order follows
    the byte layout: magic, version, msg_type, length bound, completeness, CRC.
    """
    if len(data) < 4:
        raise Truncated(f"{len(data)} bytes, magic needs 4")
    if data[:4] != MAGIC:
        raise BadMagic(f"got {data[:4]!r}")
    if len(data) < 5:
        raise Truncated("missing protocol version byte")
    if data[4] != PROTOCOL_VERSION:
        raise BadVersion(f"got 0x{data[4]:02x}, expected 0x{PROTOCOL_VERSION:02x}")
    if len(data) < 6:
        raise Truncated("missing message type byte")
    msg_type = data[5]
    if not MIN_TYPE <= msg_type <= MAX_TYPE:
        raise UnknownType(f"message type 0x{msg_type:02x}")
    if len(data) < HEADER_LEN:
        raise Truncated("incomplete payload length field")
    payload_len = int.from_bytes(data[6:10], "big")
    if payload_len > MAX_PAYLOAD:
        raise LengthOverflow(f"declared payload of {payload_len} bytes exceeds {MAX_PAYLOAD}")
    total = HEADER_LEN + payload_len + CRC_LEN
    if len(data) < total:
        raise Truncated(f"frame declares {total} bytes, got {len(data)}")
    payload = data[HEADER_LEN:HEADER_LEN + payload_len]
    crc = int.from_bytes(data[total - CRC_LEN:total], "big")
    if crc != crc32(msg_type, payload):
        raise CrcMismatch(f"stored 0x{crc:08x} != computed 0x{crc32(msg_type, payload):08x}")
    return msg_type, payload, total


def frame_length(data: bytes) -> int | None:
    """Total length of the frame starting at ``data``, if the header is in."""
    if len(data) < HEADER_LEN:
        return None
    return HEADER_LEN + int.from_bytes(data[6:10], "big") + CRC_LEN


class FrameReader:
    """Incremental frame splitter for byte-stream transports.

    Header-level corruption (bad magic/version/type or an oversize length)
    desynchronizes the stream and is raised to the caller, which should drop
    the connection. CRC or payload errors consume exactly one frame and are
    returned, so the session can answer with ERROR and continue.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def pop(self) -> tuple[bytes, int, bytes, DecodeError | None] | None:
        """Next complete frame as (raw, msg_type, payload, error) or None."""
        buf = self._buf
        if not buf:
            return None
        try:
            msg_type, payload, total = decode_frame(bytes(buf))
        except Truncated:
            return None
        except (BadMagic, BadVersion, UnknownType, LengthOverflow):
            raise
        except CrcMismatch as exc:
            total = frame_length(bytes(buf))
            raw = bytes(buf[:total])
            del buf[:total]
            return raw, raw[5], raw[HEADER_LEN:total - CRC_LEN], exc
        raw = bytes(buf[:total])
        del buf[:total]
        return raw, msg_type, payload, None
