"""Edge runtime: decision rule, queue, persistence, sync machine, HTTP API."""

import json
import socket
import urllib.error
import urllib.request

import pytest

from farmlight import jsoncanon, synthgen
from farmlight import model as model_mod
from farmlight.domain import (
    BackpressureError,
    ContractViolation,
    Diagnosis,
    NotReadyError,
)
from farmlight.edge.api import EdgeApiServer
from farmlight.edge.runtime import (
    HEALTHY_RECOMMENDATION,
    QUEUE_CAPACITY,
    ActuationCommand,
    EdgePolicy,
    EdgeRuntime,
    decide,
)
from farmlight.netproto import messages as msg
from farmlight.netproto.cloud import CloudNode, ModelRegistry, TelemetryStore
from farmlight.rng import Rng
from farmlight.simnet import LiveScheduler, SimNet, SimScheduler

HIGH_URGENCY_CLASS = 3     # root_rot
MEDIUM_URGENCY_CLASS = 1   # leaf_rust
LOW_URGENCY_CLASS = 2      # powdery_mildew


@pytest.fixture(scope="module")
def student_blob(pipeline):
    return (pipeline["out_dir"] / "student_final.flsm").read_bytes()


@pytest.fixture(scope="module")
def other_blob(pipeline):
    return (pipeline["out_dir"] / "student_dpt.flsm").read_bytes()


def _diag(probs) -> Diagnosis:
    return Diagnosis(obs_id="o1", probs=tuple(probs), recommendation="r",
                     model_version="v")


def _probs(cls: int, conf: float):
    rest = 1.0 - conf
    vec = [0.0] * 8
    vec[cls] = conf
    vec[0 if cls != 0 else 1] = rest
    return vec


def _make_runtime(world, scheduler, *, model=None, policy=None, **kw) -> EdgeRuntime:
    catalog, _specs = world
    rt = EdgeRuntime("edge-1", policy or EdgePolicy(), catalog, scheduler, **kw)
    if model is not None:
        rt.install_model(model)
    return rt


def _gen(world, cls: int, rng: Rng):
    _catalog, specs = world
    return synthgen.gen_observation(specs[cls], rng)


# ------------------------------------------------------------- decide rule

def test_decide_rule_table(world):
    catalog, _ = world
    policy = EdgePolicy()  # threshold 0.7
    assert decide(_diag(_probs(0, 1.0)), policy, catalog) == "none"
    assert decide(_diag(_probs(HIGH_URGENCY_CLASS, 0.69)), policy, catalog) == "none"
    assert decide(_diag(_probs(HIGH_URGENCY_CLASS, 0.7)), policy,
                  catalog) == "alert+command"
    assert decide(_diag(_probs(MEDIUM_URGENCY_CLASS, 0.75)), policy, catalog) == "alert"
    assert decide(_diag(_probs(LOW_URGENCY_CLASS, 0.75)), policy, catalog) == "alert"
    assert decide(_diag(_probs(7, 0.99)), policy, catalog) == "alert+command"
    # Healthy never alerts, whatever the confidence.
    assert decide(_diag(_probs(0, 0.9999)), policy, catalog) == "none"
    # Threshold equality fires; strictly-below does not.
    strict = EdgePolicy(alert_threshold=0.75)
    assert decide(_diag(_probs(HIGH_URGENCY_CLASS, 0.75)), strict,
                  catalog) == "alert+command"
    assert decide(_diag(_probs(HIGH_URGENCY_CLASS, 0.6875)), strict, catalog) == "none"


def test_edge_policy_validation_and_round_trip():
    with pytest.raises(ContractViolation):
        EdgePolicy(alert_threshold=0.0)
    with pytest.raises(ContractViolation):
        EdgePolicy(alert_threshold=1.5)
    with pytest.raises(ContractViolation):
        EdgePolicy(idle_secs=0.0)
    with pytest.raises(ContractViolation):
        EdgePolicy(batch_max=0)
    p = EdgePolicy(alert_threshold=0.9, batch_max=7)
    assert EdgePolicy.from_dict(p.to_dict()) == p
    assert EdgePolicy.from_dict({"batch_max": 3}) == EdgePolicy(batch_max=3)


# ------------------------------------------------------- queue and backlog

def test_queue_capacity_constant():
    assert QUEUE_CAPACITY == 10_000


def test_backpressure_at_capacity(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob,
                       queue_capacity=5)
    rng = Rng(1)
    for _ in range(5):
        rt.ingest(_gen(world, 0, rng))
    assert rt.queue_depth() == 5
    with pytest.raises(BackpressureError):
        rt.ingest(_gen(world, 0, rng))
    # Draining frees capacity; ingest succeeds again.
    net.run(until=1.0)
    assert rt.queue_depth() == 0
    rt.ingest(_gen(world, 0, rng))


def test_queue_holds_until_model_arrives(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net))
    rng = Rng(2)
    for _ in range(3):
        rt.ingest(_gen(world, HIGH_URGENCY_CLASS, rng))
    net.run(until=2.0)
    assert rt.queue_depth() == 3  # held, not dropped
    assert rt.status()["buffered_records"] == 0
    rt.install_model(student_blob)
    net.run(until=4.0)
    assert rt.queue_depth() == 0
    assert rt.status()["buffered_records"] == 3
    with pytest.raises(NotReadyError):
        _make_runtime(world, SimScheduler(SimNet())).diagnose(_gen(world, 0, rng))


def test_burst_alerts_preserve_ingest_order(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob)
    rng = Rng(3)
    burst = [_gen(world, HIGH_URGENCY_CLASS, rng) for _ in range(10)]
    for obs in burst:
        rt.ingest(obs)
    net.run(until=1.0)
    assert [a.obs_id for a in rt.alerts] == [o.obs_id for o in burst]
    # Ids share one edge-wide sequence; alert ids must still be unique and ordered.
    seqs = [int(a.alert_id.rsplit("a", 1)[1]) for a in rt.alerts]
    assert all(a.alert_id.startswith("edge-1-a") for a in rt.alerts)
    assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
    for alert in rt.alerts:
        assert alert.urgency == "high"
        assert alert.image_ref == f"/v1/observations/{alert.obs_id}"
        assert alert.confidence >= 0.7


def test_healthy_observations_never_alert(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob)
    rng = Rng(4)
    for _ in range(5):
        rt.ingest(_gen(world, 0, rng))
    net.run(until=1.0)
    assert rt.alerts == [] and rt.commands == {}
    assert rt.status()["buffered_records"] == 5  # telemetry still recorded


# ---------------------------------------------------------------- commands

def test_command_lifecycle_and_audit(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob)
    rng = Rng(5)
    rt.ingest(_gen(world, HIGH_URGENCY_CLASS, rng))
    rt.ingest(_gen(world, HIGH_URGENCY_CLASS, rng))
    net.run(until=1.0)
    pending = rt.pending_commands()
    assert len(pending) == 2 and all(c.state == "pending" for c in pending)
    assert all(c.requires_approval for c in pending)

    approved = rt.decide_command(pending[0].command_id, approve=True)
    assert approved.state == "executed"  # approve implies execution
    rejected = rt.decide_command(pending[1].command_id, approve=False)
    assert rejected.state == "rejected"
    assert rt.pending_commands() == []
    states = [(e["command_id"], e["state"]) for e in rt.audit]
    assert states == [
        (approved.command_id, "approved"), (approved.command_id, "executed"),
        (rejected.command_id, "rejected"),
    ]
    with pytest.raises(ContractViolation):
        rt.decide_command(approved.command_id, approve=True)  # already executed
    with pytest.raises(ContractViolation):
        rt.decide_command(rejected.command_id, approve=True)
    with pytest.raises(KeyError):
        rt.decide_command("edge-1-c999", approve=True)


def test_auto_actuate_skips_approval(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob,
                       policy=EdgePolicy(auto_actuate=True))
    rt.ingest(_gen(world, HIGH_URGENCY_CLASS, Rng(6)))
    net.run(until=1.0)
    (command,) = rt.commands.values()
    assert command.requires_approval is False
    assert command.state == "executed"


def test_command_transition_matrix():
    cmd = ActuationCommand("c1", "spray", "s1", True, "o1", 0)
    with pytest.raises(ContractViolation):
        cmd.transition("executed", 1)  # pending -> executed skips approval
    cmd.transition("approved", 1)
    with pytest.raises(ContractViolation):
        cmd.transition("rejected", 2)  # approved can only execute
    cmd.transition("executed", 3)
    assert cmd.decided_ms == 3
    with pytest.raises(ContractViolation):
        ActuationCommand("c2", "harvest", "s1", True, "o1", 0)


# ------------------------------------------------------------------- query

def test_query_paths(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob)
    with pytest.raises(NotReadyError):
        rt.query("anything wrong?")
    rng = Rng(7)
    healthy = _gen(world, 0, rng)
    sick = _gen(world, HIGH_URGENCY_CLASS, rng)
    rt.ingest(healthy)
    rt.ingest(sick)
    net.run(until=1.0)

    latest = rt.query("What is the status?")
    assert latest["obs_id"] == sick.obs_id  # defaults to the newest observation
    assert latest["class_name"] == "root_rot"
    assert "Recommended:" in latest["answer"]

    by_id = rt.query("And this one?", obs_id=healthy.obs_id)
    assert by_id["class_name"] == "healthy"
    assert HEALTHY_RECOMMENDATION in by_id["answer"]
    assert by_id["prompt_text"].startswith("Current sensor data:")
    with pytest.raises(KeyError):
        rt.query("?", obs_id="edge-1-missing")


def test_status_shape(world, student_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob)
    doc = rt.status()
    assert doc == {
        "edge_id": "edge-1",
        "model_version": rt.model_version(),
        "model_stage": "final",
        "queue_depth": 0,
        "buffered_records": 0,
        "acked_records": 0,
        "alerts_total": 0,
        "pending_commands": 0,
        "session_id": None,
        "last_sync_ms": None,
    }


# ------------------------------------------------------------- persistence

def test_restart_restores_log_cursor_and_model(world, student_blob, tmp_path):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob,
                       data_dir=tmp_path)
    rng = Rng(8)
    for cls in (0, HIGH_URGENCY_CLASS, 0):
        rt.ingest(_gen(world, cls, rng))
    net.run(until=1.0)
    (command,) = rt.commands.values()
    rt.decide_command(command.command_id, approve=True)
    assert (tmp_path / "telemetry.log").exists()
    assert (tmp_path / "audit.log").exists()
    assert (tmp_path / "model.flsm").exists()

    rt2 = _make_runtime(world, SimScheduler(SimNet()), data_dir=tmp_path)
    assert rt2.model_version() == rt.model_version()
    assert rt2.status()["buffered_records"] == 3
    assert rt2.status()["acked_records"] == 0


def test_restart_ignores_torn_telemetry_tail(world, student_blob, tmp_path):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=student_blob,
                       data_dir=tmp_path)
    rng = Rng(9)
    rt.ingest(_gen(world, 0, rng))
    rt.ingest(_gen(world, 0, rng))
    net.run(until=1.0)
    with open(tmp_path / "telemetry.log", "ab") as f:
        f.write((500).to_bytes(4, "big") + b'{"half":')  # crash mid-append
    rt2 = _make_runtime(world, SimScheduler(SimNet()), data_dir=tmp_path)
    assert rt2.status()["buffered_records"] == 2


def test_install_model_rejects_corrupt_bytes(world, student_blob):
    rt = _make_runtime(world, SimScheduler(SimNet()), model=student_blob)
    before = rt.model_version()
    corrupt = student_blob[:-1] + bytes([student_blob[-1] ^ 0xFF])
    with pytest.raises(Exception):
        rt.install_model(corrupt)
    assert rt.model_version() == before  # prior snapshot keeps serving


def test_hot_swap_changes_serving_version(world, student_blob, other_blob):
    net = SimNet()
    rt = _make_runtime(world, SimScheduler(net), model=other_blob)
    rng = Rng(10)
    obs = _gen(world, 0, rng)
    rt.diagnose(obs)
    v1 = rt.model_version()
    rt.install_model(student_blob)
    assert rt.model_version() != v1
    diag = rt.diagnose(obs)
    assert diag.model_version == rt.model_version()


# ------------------------------------------------------------ sync machine

class SimCloudHarness:
    """In-sim request/reply transport between one runtime and a CloudNode."""

    def __init__(self, net: SimNet, node: CloudNode, latency: float = 0.05,
                 drop_first: int = 0, corrupt_chunks: int = 0):
        self.net = net
        self.node = node
        self.latency = latency
        self.drop_remaining = drop_first
        self.corrupt_remaining = corrupt_chunks
        self.runtime: EdgeRuntime | None = None
        self.sent_types: list = []

    def send(self, raw: bytes) -> None:
        if self.drop_remaining > 0:
            self.drop_remaining -= 1
            return
        message = msg.decode(raw)
        self.sent_types.append(message.TYPE)

        def deliver(message=message):
            reply = self.node.handle(message)
            if reply is None:
                return
            if isinstance(reply, msg.ModelChunk) and self.corrupt_remaining > 0:
                self.corrupt_remaining -= 1
                reply = msg.ModelChunk(
                    version_id=reply.version_id, index=reply.index,
                    chunk=bytes([reply.chunk[0] ^ 0xFF]) + reply.chunk[1:])
            frame = msg.encode(reply)
            self.net.after(self.latency, lambda: self.runtime.on_frame(frame))

        self.net.after(self.latency, deliver)


def _sync_pair(world, student_blob, *, policy=None, data_dir=None,
               registry_blob=None, **harness_kw):
    net = SimNet()
    node = CloudNode(TelemetryStore(), ModelRegistry())
    if registry_blob is not None:
        node.registry.publish(registry_blob)
    harness = SimCloudHarness(net, node, **harness_kw)
    policy = policy or EdgePolicy(idle_secs=0.2, model_check_interval_secs=1.0,
                                  batch_max=256)
    rt = _make_runtime(world, SimScheduler(net), model=student_blob,
                       policy=policy, data_dir=data_dir, send_frame=harness.send)
    harness.runtime = rt
    return net, node, harness, rt


def test_sync_opens_session_and_flushes_batches(world, student_blob):
    policy = EdgePolicy(idle_secs=0.2, model_check_interval_secs=60.0, batch_max=2)
    net, node, harness, rt = _sync_pair(world, student_blob, policy=policy)
    rng = Rng(11)
    for cls in (0, HIGH_URGENCY_CLASS, 0, 0, MEDIUM_URGENCY_CLASS):
        rt.ingest(_gen(world, cls, rng))
    rt.start_sync()
    net.run(until=10.0)
    assert rt.session_id is not None
    assert rt.status()["acked_records"] == 5
    assert rt.status()["buffered_records"] == 0
    assert rt.formed_batch_ids == ["edge-1-r0-n2", "edge-1-r2-n2", "edge-1-r4-n1"]
    assert node.store.batch_ids("edge-1") == set(rt.formed_batch_ids)
    assert node.store.records("edge-1") == rt._telemetry


def test_sync_timeout_backoff_then_recovers(world, student_blob):
    net, node, harness, rt = _sync_pair(world, student_blob, drop_first=3)
    rt.start_sync()
    net.run(until=60.0)
    assert rt.session_id is not None  # recovered after three lost HELLOs
    timeouts = [e for e in rt.log if e["event"] == "timeout"]
    assert [t["attempt"] for t in timeouts] == [1, 2, 3]
    delays = [t["retry_in"] for t in timeouts]
    assert delays == sorted(delays) and delays[0] < delays[1] < delays[2]
    # Doubling base beats the 25% jitter, so growth is at least 1.6x.
    assert delays[1] / delays[0] > 1.6 and delays[2] / delays[1] > 1.6


def test_sync_downloads_model_in_chunks_and_swaps(world, student_blob, other_blob,
                                                  monkeypatch):
    monkeypatch.setattr("farmlight.netproto.cloud.CHUNK_SIZE", 1024)
    net, node, harness, rt = _sync_pair(world, other_blob,
                                        registry_blob=student_blob)
    target = node.registry.newest()
    assert target.chunk_count > 10  # the patched chunk size forces many rounds
    rt.start_sync()
    net.run(until=30.0)
    assert rt.model_version() == target.version_id
    assert harness.sent_types.count(msg.ModelChunkReq.TYPE) == target.chunk_count
    swaps = [e for e in rt.log if e["event"] == "model_swapped"]
    assert swaps[-1]["version_id"] == target.version_id


def test_sync_same_version_skips_download(world, student_blob):
    net, node, harness, rt = _sync_pair(world, student_blob,
                                        registry_blob=student_blob)
    rt.start_sync()
    net.run(until=5.0)  # several model-check intervals
    assert harness.sent_types.count(msg.ModelQuery.TYPE) >= 2
    assert harness.sent_types.count(msg.ModelChunkReq.TYPE) == 0
    assert rt.integrity_failures == 0


def test_sync_aborts_swap_on_corrupt_chunk_then_retries(world, student_blob,
                                                        other_blob):
    net, node, harness, rt = _sync_pair(world, other_blob,
                                        registry_blob=student_blob,
                                        corrupt_chunks=1)
    prior = rt.model_version()
    rt.start_sync()
    net.run(until=1.8)  # first download attempt only
    assert rt.integrity_failures == 1
    assert rt.model_version() == prior  # prior snapshot survived the bad blob
    aborted = [e for e in rt.log if e["event"] == "swap_aborted"]
    assert aborted and "IntegrityError" in aborted[0]["error"]
    net.run(until=30.0)  # next model check downloads clean bytes
    assert rt.model_version() == node.registry.newest().version_id


def test_sync_no_model_error_keeps_session_alive(world, student_blob):
    net, node, harness, rt = _sync_pair(world, student_blob)  # empty registry
    rt.start_sync()
    rng = Rng(12)
    net.run(until=2.5)
    errors = [e for e in rt.log if e["event"] == "peer_error"]
    assert errors and errors[0]["code"] == "no_model"
    rt.ingest(_gen(world, 0, rng))  # telemetry still flows afterwards
    net.run(until=10.0)
    assert rt.status()["acked_records"] == 1


def test_sync_restart_flushes_backlog_on_hello(world, student_blob, tmp_path):
    net1 = SimNet()
    rt1 = _make_runtime(world, SimScheduler(net1), model=student_blob,
                        data_dir=tmp_path)
    rng = Rng(13)
    for _ in range(3):
        rt1.ingest(_gen(world, 0, rng))
    net1.run(until=1.0)
    rt1.stop()

    net = SimNet()
    node = CloudNode(TelemetryStore(), ModelRegistry())
    harness = SimCloudHarness(net, node)
    rt2 = _make_runtime(
        world, SimScheduler(net), data_dir=tmp_path,
        policy=EdgePolicy(idle_secs=0.2, model_check_interval_secs=60.0),
        send_frame=harness.send)
    harness.runtime = rt2
    rt2.start_sync()
    net.run(until=10.0)  # no new ingest: the HELLO path alone must flush
    assert rt2.status()["acked_records"] == 3
    assert node.store.batch_ids("edge-1") == {"edge-1-r0-n3"}
    assert (tmp_path / "cursor.json").read_bytes() == b'{"acked":3}'


def test_sync_query_over_frames(world, student_blob):
    net, node, harness, rt = _sync_pair(world, student_blob)
    rng = Rng(14)
    obs = _gen(world, HIGH_URGENCY_CLASS, rng)
    rt.ingest(obs)
    net.run(until=0.5)
    replies = []
    rt._send_frame = lambda raw: replies.append(msg.decode(raw))
    rt.on_frame(msg.encode(msg.Query(text="what now?", obs_id=obs.obs_id)))
    assert isinstance(replies[-1], msg.Response)
    assert replies[-1].diagnosis["predicted"] == HIGH_URGENCY_CLASS
    rt.on_frame(msg.encode(msg.Query(text="?", obs_id="missing")))
    assert isinstance(replies[-1], msg.ErrorMsg)
    assert replies[-1].code == "unknown_obs"


# ---------------------------------------------------------------- HTTP API

def _http(method: str, url: str, doc: dict | None = None):
    body = jsoncanon.dumps_bytes(doc) if doc is not None else None
    req = urllib.request.Request(url, data=body, method=method)
    if body is not None:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def _wait_for_observation(base: str, obs_id: str, deadline: float = 10.0):
    import time
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        status, doc = _http("GET", f"{base}/v1/observations/{obs_id}")
        if status == 200:
            return doc
        time.sleep(0.02)
    raise AssertionError(f"observation {obs_id} never became available")


@pytest.fixture()
def api(world, student_blob):
    scheduler = LiveScheduler()
    rt = _make_runtime(world, scheduler, model=student_blob)
    server = EdgeApiServer(rt, host="127.0.0.1", port=0)
    server.start()
    yield server
    server.stop()
    scheduler.close()


def test_http_full_operator_flow(api, world):
    base = api.base_url
    status, doc = _http("GET", f"{base}/v1/status")
    assert status == 200 and doc["edge_id"] == "edge-1"

    rng = Rng(15)
    sick = _gen(world, HIGH_URGENCY_CLASS, rng)
    status, doc = _http("POST", f"{base}/v1/observations", sick.to_dict())
    assert status == 202 and doc == {"obs_id": sick.obs_id, "queued": True}
    stored = _wait_for_observation(base, sick.obs_id)
    assert stored["diagnosis"]["predicted"] == HIGH_URGENCY_CLASS

    status, doc = _http("GET", f"{base}/v1/alerts")
    assert status == 200 and len(doc["alerts"]) == 1
    alert = doc["alerts"][0]
    assert alert["obs_id"] == sick.obs_id and alert["urgency"] == "high"
    status, doc = _http("GET", f"{base}/v1/alerts?since_ms={alert['created_ms']}")
    assert doc["alerts"] == []  # strict 'after' filter

    status, doc = _http("POST", f"{base}/v1/query",
                        {"text": "what should I do?", "obs_id": sick.obs_id})
    assert status == 200 and doc["class_name"] == "root_rot"
    assert "Recommended:" in doc["answer"]

    status, doc = _http("GET", f"{base}/v1/commands")
    assert status == 200 and len(doc["commands"]) == 1
    cmd_id = doc["commands"][0]["command_id"]
    status, doc = _http("POST", f"{base}/v1/commands/{cmd_id}/approve")
    assert status == 200 and doc["command"]["state"] == "executed"
    status, doc = _http("POST", f"{base}/v1/commands/{cmd_id}/reject")
    assert status == 409 and doc["error"]["code"] == "conflict"
    status, doc = _http("POST", f"{base}/v1/commands/nope/approve")
    assert status == 404


def test_http_error_mapping(api):
    base = api.base_url
    status, doc = _http("GET", f"{base}/v1/observations/unknown")
    assert status == 404 and doc["error"]["code"] == "not_found"
    status, _ = _http("GET", f"{base}/v1/nothing/here")
    assert status == 404
    status, doc = _http("POST", f"{base}/v1/query", {"text": ""})
    assert status == 400 and doc["error"]["code"] == "bad_request"
    status, doc = _http("POST", f"{base}/v1/query", {"text": "hi", "obs_id": "nope"})
    assert status == 404
    status, doc = _http("POST", f"{base}/v1/observations", {"not": "an observation"})
    assert status == 400
    status, doc = _http("POST", f"{base}/v1/query", {"text": "latest?"})
    assert status == 503 and doc["error"]["code"] == "not_ready"


def test_http_backpressure_maps_to_429(world, student_blob):
    scheduler = LiveScheduler()
    rt = _make_runtime(world, scheduler, model=student_blob, queue_capacity=0)
    server = EdgeApiServer(rt, host="127.0.0.1", port=0)
    server.start()
    try:
        obs = _gen(world, 0, Rng(16))
        status, doc = _http("POST", f"{server.base_url}/v1/observations",
                            obs.to_dict())
        assert status == 429 and doc["error"]["code"] == "backpressure"
    finally:
        server.stop()
        scheduler.close()


def test_http_options_preflight(api):
    req = urllib.request.Request(f"{api.base_url}/v1/query", method="OPTIONS")
    with urllib.request.urlopen(req, timeout=10) as resp:
        assert resp.status == 204
        assert resp.headers["Access-Control-Allow-Origin"] == "*"


def test_http_sse_streams_alerts(api, world):
    sock = socket.create_connection((api.host, api.port), timeout=10)
    try:
        sock.sendall(f"GET /v1/events HTTP/1.1\r\nHost: {api.host}\r\n\r\n".encode())
        buf = b""
        while b": connected\n\n" not in buf:
            buf += sock.recv(4096)
        assert b"200" in buf.split(b"\r\n", 1)[0]
        assert b"text/event-stream" in buf

        sick = _gen(world, HIGH_URGENCY_CLASS, Rng(17))
        status, _ = _http("POST", f"{api.base_url}/v1/observations", sick.to_dict())
        assert status == 202
        while b"\n\n" not in buf.split(b": connected\n\n", 1)[1]:
            buf += sock.recv(4096)
        event = buf.split(b": connected\n\n", 1)[1]
        assert event.startswith(b"event: alert\ndata: ")
        payload = json.loads(event.split(b"data: ", 1)[1].split(b"\n", 1)[0])
        assert payload["obs_id"] == sick.obs_id
        assert payload["urgency"] == "high"
    finally:
        sock.close()
