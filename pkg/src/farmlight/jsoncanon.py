"""Canonical JSON: the single structured encoding used for files and wire.

Canonical form: keys sorted lexicographically, no insignificant whitespace,
UTF-8, no NaN/Infinity, floats in Python's shortest round-trip repr. Digests
and golden tests rely on this being byte-stable.
"""

from __future__ import annotations

import json
from typing import Any


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def dumps_bytes(obj: Any) -> bytes:
    return dumps(obj).encode("utf-8")


def loads(data: str | bytes) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data, parse_constant=_reject_constant)


def _reject_constant(name: str) -> None:
    raise ValueError(f"non-finite JSON constant not allowed: {name}")
