"""The edge node: ingest queue, inference, decision policy, cloud sync.

One runtime instance serves both simulated and live deployments; all timing
goes through the injected scheduler and all frame IO through an injected
``send_frame`` callable, so the surrounding harness decides whether time and
bytes are simulated or real.

Concurrency: every state mutation runs either in the scheduler's single
callback thread or under ``self._lock`` (API threads). The model snapshot is
an immutable object replaced atomically, so inference never observes a
half-swapped model.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

from .. import fusion, jsoncanon, model as model_mod
from ..domain import (
    BackpressureError,
    ClassCatalog,
    ContractViolation,
    Diagnosis,
    FarmlightError,
    NotReadyError,
    Observation,
    sha256_hex,
)
from ..netproto import messages as msg
from ..netproto.frames import DecodeError
from ..rng import Rng, derive_seed

QUEUE_CAPACITY = 10_000
HEALTHY_RECOMMENDATION = "No action required."


@dataclass(frozen=True)
class EdgePolicy:
    alert_threshold: float = 0.7
    auto_actuate: bool = False
    idle_secs: float = 5.0
    batch_max: int = 256
    model_check_interval_secs: float = 30.0

    def __post_init__(self):
        if not 0.0 < self.alert_threshold <= 1.0:
            raise ContractViolation(f"alert_threshold out of (0,1]: {self.alert_threshold}")
        if self.idle_secs <= 0.0 or self.model_check_interval_secs <= 0.0:
            raise ContractViolation("idle_secs and model_check_interval_secs must be > 0")
        if self.batch_max < 1:
            raise ContractViolation("batch_max must be >= 1")

    def to_dict(self) -> dict:
        return {
            "alert_threshold": self.alert_threshold,
            "auto_actuate": self.auto_actuate,
            "idle_secs": self.idle_secs,
            "batch_max": self.batch_max,
            "model_check_interval_secs": self.model_check_interval_secs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EdgePolicy":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass(frozen=True)
class Alert:
    alert_id: str
    obs_id: str
    sensor_id: str
    location: tuple
    class_id: int
    class_name: str
    confidence: float
    recommendation: str
    urgency: str
    created_ms: int
    acked: bool = False
    image_ref: str = ""

    def to_dict(self) -> dict:
        return {
            "alert_id": self.alert_id, "obs_id": self.obs_id,
            "sensor_id": self.sensor_id,
            "location": {"lat": self.location[0], "lon": self.location[1]},
            "class_id": self.class_id, "class_name": self.class_name,
            "confidence": self.confidence, "recommendation": self.recommendation,
            "urgency": self.urgency, "created_ms": self.created_ms,
            "acked": self.acked, "image_ref": self.image_ref,
        }


COMMAND_TRANSITIONS = {
    ("pending", "approved"), ("pending", "rejected"), ("approved", "executed"),
}


class ActuationCommand:
    """Mutable state machine: pending -> approved -> executed, or pending -> rejected."""

    def __init__(self, command_id: str, action: str, target_sensor_id: str,
                 requires_approval: bool, obs_id: str, created_ms: int):
        if action not in ("spray", "irrigate", "none"):
            raise ContractViolation(f"bad action: {action}")
        self.command_id = command_id
        self.action = action
        self.target_sensor_id = target_sensor_id
        self.requires_approval = requires_approval
        self.obs_id = obs_id
        self.created_ms = created_ms
        self.state = "pending"
        self.decided_ms: int | None = None

    def transition(self, new_state: str, now_ms: int) -> None:
        if (self.state, new_state) not in COMMAND_TRANSITIONS:
            raise ContractViolation(
                f"illegal command transition {self.state} -> {new_state}")
        self.state = new_state
        self.decided_ms = now_ms

    def to_dict(self) -> dict:
        return {
            "command_id": self.command_id, "action": self.action,
            "target_sensor_id": self.target_sensor_id,
            "requires_approval": self.requires_approval, "obs_id": self.obs_id,
            "created_ms": self.created_ms, "state": self.state,
            "decided_ms": self.decided_ms,
        }


@dataclass(frozen=True)
class ModelSnapshot:
    params: model_mod.ModelParams
    config: model_mod.ModelConfig
    meta: dict
    version_id: str
    stage: str


def decide(diagnosis: Diagnosis, policy: EdgePolicy, catalog: ClassCatalog) -> str:
    """Decision rule: 'none', 'alert', or 'alert+command'.

    Healthy predictions and low-confidence predictions never alert; an
    ActuationCommand is added only for high-urgency classes.
    """
    entry = catalog[diagnosis.predicted]
    if entry.is_healthy or diagnosis.confidence < policy.alert_threshold:
        return "none"
    return "alert+command" if entry.urgency == "high" else "alert"


def _read_length_prefixed(path: Path) -> list:
    """Records from an append-only [u32 BE length][json] file; a torn tail
    (crash mid-append) is ignored rather than fatal."""
    out = []
    data = path.read_bytes()
    offset = 0
    while offset + 4 <= len(data):
        n = int.from_bytes(data[offset:offset + 4], "big")
        if offset + 4 + n > len(data):
            break
        out.append(jsoncanon.loads(data[offset + 4:offset + 4 + n]))
        offset += 4 + n
    return out


class EdgeRuntime:
    def __init__(
        self,
        edge_id: str,
        policy: EdgePolicy,
        catalog: ClassCatalog,
        scheduler,
        data_dir: str | Path | None = None,
        send_frame=None,
        seed: int = 0,
        queue_capacity: int = QUEUE_CAPACITY,
        request_timeout_secs: float = 2.0,
        backoff_base_secs: float = 1.0,
        backoff_cap_secs: float = 60.0,
    ):
        self.edge_id = edge_id
        self.policy = policy
        self.catalog = catalog
        self.scheduler = scheduler
        self._send_frame = send_frame
        self._rng = Rng(derive_seed(seed, f"edge/{edge_id}"))
        self._lock = threading.RLock()
        self._queue_capacity = queue_capacity
        self._request_timeout = request_timeout_secs
        self._backoff_base = backoff_base_secs
        self._backoff_cap = backoff_cap_secs

        self._snapshot: ModelSnapshot | None = None
        self._queue: list = []
        self._draining = False
        self._observations: dict = {}
        self._latest_obs_id: str | None = None
        self.alerts: list = []
        self.commands: dict = {}
        self.audit: list = []
        self._alert_subscribers: list = []

        self._data_dir = Path(data_dir) if data_dir is not None else None
        self._telemetry: list = []       # every record ever appended, in order
        self._acked = 0                  # records [0:_acked] are at the cloud
        self._outbox: list = []          # formed, unacknowledged batches (FIFO)
        self.formed_batch_ids: list = []
        self._id_seq = 0

        self.session_id: str | None = None
        self._sync_state = "offline"     # offline | idle | await_hello | await_ack
                                         # | await_manifest | await_chunk
        self._inflight: dict | None = None
        self._backoff_attempt = 0
        self._model_check_pending = False
        self._download: dict | None = None
        self._last_activity = scheduler.now()
        self._idle_handle = None
        self._model_check_handle = None
        self.last_sync_ms: int | None = None
        self.integrity_failures = 0
        self.log: list = []

        if self._data_dir is not None:
            self._data_dir.mkdir(parents=True, exist_ok=True)
            self._restore()

    # -- persistence -------------------------------------------------------

    def _restore(self) -> None:
        tlog = self._data_dir / "telemetry.log"
        if tlog.exists():
            self._telemetry = _read_length_prefixed(tlog)
        cursor = self._data_dir / "cursor.json"
        if cursor.exists():
            doc = jsoncanon.loads(cursor.read_bytes())
            self._acked = min(int(doc.get("acked", 0)), len(self._telemetry))
        model_path = self._data_dir / "model.flsm"
        if model_path.exists():
            params, config, meta = model_mod.load(model_path.read_bytes())
            self._snapshot = ModelSnapshot(
                params=params, config=config, meta=meta,
                version_id=str(meta.get("version_id", "")),
                stage=str(meta.get("stage", "")))

    def _append_telemetry(self, record: dict) -> None:
        self._telemetry.append(record)
        if self._data_dir is not None:
            blob = jsoncanon.dumps_bytes(record)
            with open(self._data_dir / "telemetry.log", "ab") as f:
                f.write(len(blob).to_bytes(4, "big") + blob)

    def _persist_cursor(self) -> None:
        if self._data_dir is not None:
            (self._data_dir / "cursor.json").write_bytes(
                jsoncanon.dumps_bytes({"acked": self._acked}))

    def _persist_model(self, data: bytes) -> None:
        if self._data_dir is not None:
            tmp = self._data_dir / "model.flsm.tmp"
            tmp.write_bytes(data)
            tmp.replace(self._data_dir / "model.flsm")

    # -- time and ids ------------------------------------------------------

    def now_ms(self) -> int:
        return int(self.scheduler.now() * 1000)

    def _next_id(self, prefix: str) -> str:
        with self._lock:
            self._id_seq += 1
            return f"{self.edge_id}-{prefix}{self._id_seq}"

    def _log(self, event: str, **fields) -> None:
        self.log.append({"ts_ms": self.now_ms(), "event": event, **fields})

    # -- model -------------------------------------------------------------

    def install_model(self, data: bytes) -> ModelSnapshot:
        """Verify artifact bytes and swap them in as the serving snapshot."""
        params, config, meta = model_mod.load(data)
        snapshot = ModelSnapshot(
            params=params, config=config, meta=meta,
            version_id=str(meta.get("version_id", "")),
            stage=str(meta.get("stage", "")))
        self._persist_model(data)
        self._snapshot = snapshot
        self._log("model_swapped", version_id=snapshot.version_id)
        return snapshot

    @property
    def snapshot(self) -> ModelSnapshot | None:
        return self._snapshot

    def model_version(self) -> str | None:
        snap = self._snapshot
        return snap.version_id if snap else None

    # -- inference path ----------------------------------------------------

    def diagnose(self, obs: Observation) -> Diagnosis:
        """Pure inference on the current snapshot; does not touch the queue."""
        snap = self._snapshot
        if snap is None:
            raise NotReadyError("no model loaded")
        prompt = fusion.build_prompt(obs.sensors)
        patches = fusion.patchify(obs.image)
        trace = model_mod.forward(snap.params, snap.config, patches, prompt.features)
        predicted = int(max(range(len(trace.p_resp)),
                            key=lambda i: (trace.p_resp[i], -i)))
        entry = self.catalog[predicted]
        recommendation = (HEALTHY_RECOMMENDATION if entry.is_healthy
                          else "; ".join(entry.treatment))
        return Diagnosis(
            obs_id=obs.obs_id, probs=tuple(float(p) for p in trace.p_resp),
            recommendation=recommendation, model_version=snap.version_id)

    def ingest(self, obs: Observation) -> None:
        with self._lock:
            if len(self._queue) >= self._queue_capacity:
                raise BackpressureError(
                    f"queue at capacity {self._queue_capacity}; retry later")
            self._queue.append(obs)
        self._touch_activity()
        self._schedule_drain()

    def queue_depth(self) -> int:
        with self._lock:
            return len(self._queue)

    def _schedule_drain(self) -> None:
        with self._lock:
            if self._draining:
                return
            self._draining = True
        self.scheduler.call_later(0.0, self._drain_step)

    def _drain_step(self) -> None:
        with self._lock:
            if not self._queue:
                self._draining = False
                return
            if self._snapshot is None:
                # Hold the queue until a model arrives; nothing is dropped.
                self._draining = False
                self.scheduler.call_later(0.1, self._schedule_drain)
                return
            obs = self._queue.pop(0)
        self._process(obs)
        self._touch_activity()
        self.scheduler.call_later(0.0, self._drain_step)

    def _process(self, obs: Observation) -> None:
        diagnosis = self.diagnose(obs)
        outcome = decide(diagnosis, self.policy, self.catalog)
        alert = command = None
        if outcome != "none":
            entry = self.catalog[diagnosis.predicted]
            alert = Alert(
                alert_id=self._next_id("a"), obs_id=obs.obs_id,
                sensor_id=obs.sensors.sensor_id, location=obs.location,
                class_id=entry.class_id, class_name=entry.name,
                confidence=diagnosis.confidence,
                recommendation=diagnosis.recommendation, urgency=entry.urgency,
                created_ms=self.now_ms(),
                image_ref=f"/v1/observations/{obs.obs_id}")
            if outcome == "alert+command":
                command = ActuationCommand(
                    command_id=self._next_id("c"), action="spray",
                    target_sensor_id=obs.sensors.sensor_id,
                    requires_approval=not self.policy.auto_actuate,
                    obs_id=obs.obs_id, created_ms=self.now_ms())
        with self._lock:
            self._observations[obs.obs_id] = (obs, diagnosis)
            self._latest_obs_id = obs.obs_id
            if alert is not None:
                self.alerts.append(alert)
            if command is not None:
                self.commands[command.command_id] = command
            self._append_telemetry({
                "edge_id": self.edge_id,
                "obs": obs.to_dict(),
                "diagnosis": diagnosis.to_dict(),
                "alert": alert.to_dict() if alert else None,
                "command": command.to_dict() if command else None,
                "processed_ms": self.now_ms(),
            })
        if command is not None and not command.requires_approval:
            self._transition_command(command, "approved")
            self._transition_command(command, "executed")
        if alert is not None:
            for subscriber in list(self._alert_subscribers):
                subscriber(alert)
            if self._send_frame is not None and self.session_id is not None:
                # Best-effort push; the durable copy rides in telemetry.
                self._send_frame(msg.encode(msg.Alert(alert=alert.to_dict())))

    def subscribe_alerts(self, fn) -> None:
        self._alert_subscribers.append(fn)

    # -- commands ----------------------------------------------------------

    def _transition_command(self, command: ActuationCommand, new_state: str) -> None:
        command.transition(new_state, self.now_ms())
        with self._lock:
            self.audit.append({
                "ts_ms": self.now_ms(), "command_id": command.command_id,
                "state": new_state,
            })
        if self._data_dir is not None:
            blob = jsoncanon.dumps_bytes(self.audit[-1])
            with open(self._data_dir / "audit.log", "ab") as f:
                f.write(len(blob).to_bytes(4, "big") + blob)

    def decide_command(self, command_id: str, approve: bool) -> ActuationCommand:
        with self._lock:
            command = self.commands.get(command_id)
        if command is None:
            raise KeyError(command_id)
        if approve:
            self._transition_command(command, "approved")
            self._transition_command(command, "executed")
        else:
            self._transition_command(command, "rejected")
        return command

    def pending_commands(self) -> list:
        with self._lock:
            return [c for c in self.commands.values() if c.state == "pending"]

    def list_commands(self) -> list:
        with self._lock:
            return [c.to_dict() for c in self.commands.values()]

    def list_alerts(self, since_ms: int = -1) -> list:
        with self._lock:
            return [a.to_dict() for a in self.alerts if a.created_ms > since_ms]

    # -- observation store ---------------------------------------------

    def get_observation(self, obs_id: str):
        with self._lock:
            return self._observations.get(obs_id)

    def latest_observation(self):
        with self._lock:
            if self._latest_obs_id is None:
                return None
            return self._observations.get(self._latest_obs_id)

    def query(self, text: str, obs_id: str | None = None) -> dict:
        """Chat entry point: diagnose the referenced (or latest) observation."""
        if obs_id is not None:
            stored = self.get_observation(obs_id)
            if stored is None:
                raise KeyError(obs_id)
        else:
            stored = self.latest_observation()
            if stored is None:
                raise NotReadyError("no observations ingested yet")
        obs, _ = stored
        diagnosis = self.diagnose(obs)
        entry = self.catalog[diagnosis.predicted]
        prompt = fusion.build_prompt(obs.sensors)
        if entry.is_healthy:
            answer = (f"Diagnosis: {entry.name} "
                      f"(confidence {diagnosis.confidence:.2f}). {HEALTHY_RECOMMENDATION}")
        else:
            answer = (f"Diagnosis: {entry.name} "
                      f"(confidence {diagnosis.confidence:.2f}). "
                      f"Recommended: {diagnosis.recommendation}.")
        return {
            "obs_id": obs.obs_id,
            "prompt_text": prompt.text,
            "question": text,
            "answer": answer,
            "diagnosis": diagnosis.to_dict(),
            "class_name": entry.name,
        }

    # -- status --------------------------------------------------------

    def status(self) -> dict:
        snap = self._snapshot
        with self._lock:
            return {
                "edge_id": self.edge_id,
                "model_version": snap.version_id if snap else None,
                "model_stage": snap.stage if snap else None,
                "queue_depth": len(self._queue),
                "buffered_records": len(self._telemetry) - self._acked,
                "acked_records": self._acked,
                "alerts_total": len(self.alerts),
                "pending_commands": sum(
                    1 for c in self.commands.values() if c.state == "pending"),
                "session_id": self.session_id,
                "last_sync_ms": self.last_sync_ms,
            }

    # -- idle detection ------------------------------------------------

    def _touch_activity(self) -> None:
        self._last_activity = self.scheduler.now()
        if self._idle_handle is not None:
            self._idle_handle.cancel()
        if self._send_frame is not None:
            self._idle_handle = self.scheduler.call_later(
                self.policy.idle_secs, self._on_idle)

    def is_idle(self) -> bool:
        with self._lock:
            queue_empty = not self._queue
        return (queue_empty and
                self.scheduler.now() - self._last_activity >= self.policy.idle_secs)

    # -- sync session ----------------------------------------------------

    def start_sync(self) -> None:
        """Open the session and start the periodic model check."""
        if self._send_frame is None:
            raise ContractViolation("runtime was built without a frame transport")
        self._sync_state = "await_hello"
        self._send_request(msg.Hello(node_id=self.edge_id, role="edge"),
                           kind="hello")
        self._model_check_handle = self.scheduler.call_later(
            self.policy.model_check_interval_secs, self._on_model_check)
        self._idle_handle = self.scheduler.call_later(
            self.policy.idle_secs, self._on_idle)

    def _send_request(self, message, kind: str, **extra) -> None:
        self._inflight = {"kind": kind, "message": message, **extra}
        self._inflight["timeout"] = self.scheduler.call_later(
            self._request_timeout, self._on_timeout)
        self._send_frame(msg.encode(message))

    def _on_timeout(self) -> None:
        if self._inflight is None:
            return
        self._backoff_attempt += 1
        raw = self._backoff_base * (2.0 ** (self._backoff_attempt - 1))
        delay = min(self._backoff_cap, raw * (1.0 + 0.25 * self._rng.random()))
        inflight = self._inflight
        self._log("timeout", kind=inflight["kind"], attempt=self._backoff_attempt,
                  retry_in=delay)

        def retry():
            if self._inflight is inflight:
                self._inflight = None
                self._resend(inflight)

        self._inflight["timeout"] = self.scheduler.call_later(delay, retry)

    def _resend(self, inflight: dict) -> None:
        extra = {k: v for k, v in inflight.items()
                 if k not in ("kind", "message", "timeout")}
        self._send_request(inflight["message"], inflight["kind"], **extra)

    def _clear_inflight(self) -> None:
        if self._inflight is not None:
            self._inflight["timeout"].cancel()
            self._inflight = None
        self._backoff_attempt = 0

    def _on_idle(self) -> None:
        self._sync_idle_work()

    def _sync_idle_work(self) -> None:
        """Run the next piece of idle-window sync: flush telemetry first,
        then any deferred model check. Re-entered every time the session
        returns to idle, so work continues until none remains."""
        if self._send_frame is None or self.session_id is None:
            return
        if not self.is_idle() or self._sync_state != "idle":
            return
        self._form_batches()
        if self._outbox:
            self._send_next_batch()
        elif self._model_check_pending:
            self._model_check_pending = False
            self._start_model_query()

    def _form_batches(self) -> None:
        """Freeze unacked records into FIFO batches.

        Batch ids name the record range in the append-only log, so a retry or
        a restarted edge re-sends an identical range under an identical id and
        the cloud's (edge_id, batch_id) dedup stays effective across reboots.
        """
        with self._lock:
            covered = self._acked + sum(len(b["records"]) for b in self._outbox)
            while covered < len(self._telemetry):
                records = self._telemetry[covered:covered + self.policy.batch_max]
                batch_id = f"{self.edge_id}-r{covered}-n{len(records)}"
                self._outbox.append({
                    "batch_id": batch_id,
                    "start": covered,
                    "records": records,
                })
                self.formed_batch_ids.append(batch_id)
                covered += len(records)

    def _send_next_batch(self) -> None:
        head = self._outbox[0]
        self._sync_state = "await_ack"
        self._send_request(
            msg.TelemetryBatch(batch_id=head["batch_id"], edge_id=self.edge_id,
                               records=tuple(head["records"])),
            kind="batch", batch_id=head["batch_id"])

    def _start_model_query(self) -> None:
        self._sync_state = "await_manifest"
        self._send_request(msg.ModelQuery(current_version_id=self.model_version()),
                           kind="model_query")

    def _on_model_check(self) -> None:
        self._model_check_handle = self.scheduler.call_later(
            self.policy.model_check_interval_secs, self._on_model_check)
        # Mark the check and let the idle dispatcher order it after any
        # unsent telemetry; if the link is busy it runs at the next idle
        # transition instead.
        self._model_check_pending = True
        self._sync_idle_work()

    # -- frame dispatch --------------------------------------------------

    def on_frame(self, raw: bytes) -> None:
        try:
            message = msg.decode(raw)
        except DecodeError as exc:
            self._log("bad_frame", error=type(exc).__name__, detail=str(exc))
            return
        handler = getattr(self, f"_handle_{type(message).__name__.lower()}", None)
        if handler is None:
            self._log("unexpected_frame", msg_type=message.TYPE)
            return
        handler(message)

    def _handle_helloack(self, message: msg.HelloAck) -> None:
        if self._inflight is None or self._inflight["kind"] != "hello":
            return
        self._clear_inflight()
        self.session_id = message.session_id
        self._sync_state = "idle"
        self._log("session_open", session_id=message.session_id)
        # A restarted edge may reopen a session with unsent records on disk.
        self._sync_idle_work()

    def _handle_batchack(self, message: msg.BatchAck) -> None:
        if (self._inflight is None or self._inflight["kind"] != "batch"
                or self._inflight["batch_id"] != message.batch_id):
            return
        self._clear_inflight()
        with self._lock:
            head = self._outbox.pop(0)
            self._acked += len(head["records"])
            self._persist_cursor()
        self.last_sync_ms = self.now_ms()
        self._sync_state = "idle"
        self._log("batch_acked", batch_id=message.batch_id,
                  records=len(head["records"]))
        self._sync_idle_work()

    def _handle_modelmanifest(self, message: msg.ModelManifest) -> None:
        if self._inflight is None or self._inflight["kind"] != "model_query":
            return
        self._clear_inflight()
        self.last_sync_ms = self.now_ms()
        if message.version_id == self.model_version() or message.chunk_count < 1:
            self._sync_state = "idle"
            self._sync_idle_work()
            return
        self._download = {
            "manifest": message,
            "chunks": [None] * message.chunk_count,
            "next": 0,
        }
        self._sync_state = "await_chunk"
        self._request_chunk()

    def _request_chunk(self) -> None:
        download = self._download
        self._send_request(
            msg.ModelChunkReq(version_id=download["manifest"].version_id,
                              index=download["next"]),
            kind="chunk", index=download["next"])

    def _handle_modelchunk(self, message: msg.ModelChunk) -> None:
        if (self._inflight is None or self._inflight["kind"] != "chunk"
                or self._download is None
                or message.index != self._download["next"]
                or message.version_id != self._download["manifest"].version_id):
            return
        self._clear_inflight()
        download = self._download
        download["chunks"][message.index] = message.chunk
        download["next"] += 1
        if download["next"] < download["manifest"].chunk_count:
            self._request_chunk()
            return
        self._download = None
        self._sync_state = "idle"
        data = b"".join(download["chunks"])
        manifest = download["manifest"]
        try:
            if len(data) != manifest.total_bytes:
                raise model_mod.IntegrityError(
                    f"assembled {len(data)} bytes, manifest says {manifest.total_bytes}")
            if sha256_hex(data) != manifest.sha256_hex:
                raise model_mod.IntegrityError("assembled artifact digest mismatch")
            self.install_model(data)
        except FarmlightError as exc:
            # Swap aborted: the prior snapshot keeps serving.
            self.integrity_failures += 1
            self._log("swap_aborted", error=type(exc).__name__, detail=str(exc))
        self._sync_idle_work()

    def _handle_errormsg(self, message: msg.ErrorMsg) -> None:
        self._log("peer_error", code=message.code, detail=message.detail)
        if self._inflight is not None and self._inflight["kind"] == "model_query":
            # e.g. empty registry: treat as up to date for now.
            self._clear_inflight()
            self._sync_state = "idle"
            self._sync_idle_work()

    def _handle_query(self, message: msg.Query) -> None:
        if self._send_frame is None:
            return
        try:
            result = self.query(message.text, message.obs_id)
        except (KeyError, NotReadyError) as exc:
            self._send_frame(msg.encode(msg.ErrorMsg(
                code="not_ready" if isinstance(exc, NotReadyError) else "unknown_obs",
                detail=str(exc))))
            return
        self._send_frame(msg.encode(msg.Response(diagnosis=result["diagnosis"])))

    # -- teardown ---------------------------------------------------------

    def stop(self) -> None:
        for handle in (self._idle_handle, self._model_check_handle):
            if handle is not None:
                handle.cancel()
        if self._inflight is not None:
            self._inflight["timeout"].cancel()
            self._inflight = None
