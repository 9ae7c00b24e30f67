"""Cloud side: idempotent telemetry store, model registry, request handling.

The cloud is a pure request/reply node: every inbound message maps to exactly
one reply message, which makes it equally usable behind a simulated link, a
TCP server, or a direct function call in tests.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

from .. import jsoncanon, model as model_mod
from ..domain import FarmlightError, sha256
from . import messages as msg

CHUNK_SIZE = 65536


class PublishError(FarmlightError):
    """Artifact rejected by the registry."""


@dataclass(frozen=True)
class RegistryEntry:
    version_id: str
    data: bytes
    sha256_hex: str
    published_ms: int
    stage: str

    @property
    def chunk_count(self) -> int:
        return max(1, -(-len(self.data) // CHUNK_SIZE))

    def chunk(self, index: int) -> bytes:
        if not 0 <= index < self.chunk_count:
            raise IndexError(index)
        return self.data[index * CHUNK_SIZE:(index + 1) * CHUNK_SIZE]


class ModelRegistry:
    """Versioned artifact store; single writer, newest-wins distribution."""

    def __init__(self, root: str | Path | None = None):
        self._root = Path(root) if root is not None else None
        self._entries: dict = {}
        self._order: list = []
        self._lock = threading.Lock()
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            for path in sorted(self._root.glob("*.flsm")):
                self._restore(path.read_bytes())

    def _restore(self, data: bytes) -> None:
        _, _, meta = model_mod.load(data)
        entry = RegistryEntry(
            version_id=meta["version_id"], data=data, sha256_hex=sha256(data).hex(),
            published_ms=int(meta.get("published_ms", 0)), stage=meta.get("stage", ""),
        )
        self._entries[entry.version_id] = entry
        self._order.append(entry.version_id)

    def publish(self, data: bytes, published_ms: int = 0) -> RegistryEntry:
        """Validate, dedupe and append; the new entry becomes newest."""
        try:
            _, _, meta = model_mod.load(data)
        except FarmlightError as exc:
            raise PublishError(f"artifact rejected: {exc}") from exc
        version_id = meta.get("version_id")
        if not isinstance(version_id, str) or not version_id:
            raise PublishError("artifact metadata lacks a version_id")
        with self._lock:
            if version_id in self._entries:
                raise PublishError(f"duplicate version_id {version_id}")
            entry = RegistryEntry(
                version_id=version_id, data=data, sha256_hex=sha256(data).hex(),
                published_ms=published_ms, stage=str(meta.get("stage", "")),
            )
            self._entries[version_id] = entry
            self._order.append(version_id)
            if self._root is not None:
                (self._root / f"{version_id}.flsm").write_bytes(data)
            return entry

    def newest(self) -> RegistryEntry | None:
        with self._lock:
            return self._entries[self._order[-1]] if self._order else None

    def get(self, version_id: str) -> RegistryEntry | None:
        with self._lock:
            return self._entries.get(version_id)

    def version_ids(self) -> list:
        with self._lock:
            return list(self._order)


class TelemetryStore:
    """Append-only record store keyed (edge_id, batch_id); duplicates are no-ops."""

    REQUIRED_KEYS = ("obs", "diagnosis")

    def __init__(self, root: str | Path | None = None):
        self._root = Path(root) if root is not None else None
        self._seen: set = set()
        self._records: dict = {}
        self._locks: dict = {}
        self._lock = threading.Lock()
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            for path in self._root.glob("*.ndjson"):
                edge_id = path.stem
                for line in path.read_text(encoding="utf-8").splitlines():
                    doc = jsoncanon.loads(line)
                    self._seen.add((edge_id, doc["batch_id"]))
                    self._records.setdefault(edge_id, []).extend(doc["records"])

    def _edge_lock(self, edge_id: str) -> threading.Lock:
        with self._lock:
            return self._locks.setdefault(edge_id, threading.Lock())

    @classmethod
    def validate_records(cls, records) -> None:
        for i, rec in enumerate(records):
            if not isinstance(rec, dict):
                raise FarmlightError(f"record {i} is not an object")
            for key in cls.REQUIRED_KEYS:
                if key not in rec:
                    raise FarmlightError(f"record {i} lacks {key!r}")

    def store(self, edge_id: str, batch_id: str, records) -> bool:
        """Append once per (edge_id, batch_id); returns False on duplicate."""
        self.validate_records(records)
        key = (edge_id, batch_id)
        with self._edge_lock(edge_id):
            with self._lock:
                if key in self._seen:
                    return False
                self._seen.add(key)
            self._records.setdefault(edge_id, []).extend(records)
            if self._root is not None:
                line = jsoncanon.dumps({"batch_id": batch_id, "records": list(records)})
                with open(self._root / f"{edge_id}.ndjson", "a", encoding="utf-8") as f:
                    f.write(line + "\n")
        return True

    def batch_ids(self, edge_id: str | None = None) -> set:
        with self._lock:
            if edge_id is None:
                return set(self._seen)
            return {b for (e, b) in self._seen if e == edge_id}

    def records(self, edge_id: str) -> list:
        return list(self._records.get(edge_id, []))

    def record_count(self) -> int:
        return sum(len(v) for v in self._records.values())


class CloudNode:
    """Request/reply handler over (TelemetryStore, ModelRegistry)."""

    def __init__(self, store: TelemetryStore, registry: ModelRegistry,
                 node_id: str = "cloud-0"):
        self.node_id = node_id
        self.store = store
        self.registry = registry
        self.alerts: list = []
        self._session_seq = 0
        self._lock = threading.Lock()

    def handle(self, message):
        """Map one inbound message to its reply, or None for notifications."""
        if isinstance(message, msg.Hello):
            with self._lock:
                self._session_seq += 1
                return msg.HelloAck(session_id=f"{self.node_id}-s{self._session_seq}")
        if isinstance(message, msg.TelemetryBatch):
            try:
                self.store.store(message.edge_id, message.batch_id, list(message.records))
            except FarmlightError as exc:
                return msg.ErrorMsg(code="bad_records", detail=str(exc))
            return msg.BatchAck(batch_id=message.batch_id)
        if isinstance(message, msg.ModelQuery):
            entry = self.registry.newest()
            if entry is None:
                return msg.ErrorMsg(code="no_model", detail="registry is empty")
            return msg.ModelManifest(
                version_id=entry.version_id, total_bytes=len(entry.data),
                chunk_size=CHUNK_SIZE, chunk_count=entry.chunk_count,
                sha256_hex=entry.sha256_hex,
            )
        if isinstance(message, msg.ModelChunkReq):
            entry = self.registry.get(message.version_id)
            if entry is None:
                return msg.ErrorMsg(code="no_such_version", detail=message.version_id)
            try:
                chunk = entry.chunk(message.index)
            except IndexError:
                return msg.ErrorMsg(
                    code="bad_index",
                    detail=f"{message.index} not in [0, {entry.chunk_count})")
            return msg.ModelChunk(version_id=message.version_id,
                                  index=message.index, chunk=chunk)
        if isinstance(message, msg.Alert):
            # Best-effort push notification; fire-and-forget, no reply.
            with self._lock:
                self.alerts.append(message.alert)
            return None
        if isinstance(message, msg.ErrorMsg):
            return None
        return msg.ErrorMsg(code="unsupported",
                            detail=f"cloud does not serve message type 0x{message.TYPE:02x}")
