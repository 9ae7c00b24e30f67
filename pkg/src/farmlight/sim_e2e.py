"""End-to-end simulation: N edges, one gateway, one cloud, lossy links.

Everything runs on the discrete-event simulator with seeded randomness, so a
(seed, edges, drop_rate) triple fully determines the summary, including all
timestamps. The module also houses the closed-loop and hot-swap trial
harnesses used by the acceptance tests.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from . import model as model_mod, synthgen
from .distill import run_pipeline
from .domain import FarmlightError
from .edge.runtime import EdgePolicy, EdgeRuntime
from .netproto import messages as msg
from .netproto.cloud import CloudNode, ModelRegistry, TelemetryStore
from .netproto.frames import DecodeError
from .netproto.gateway import Gateway
from .rng import Rng, derive_seed
from .simnet import LossyLink, SimNet, SimScheduler


class SimAssertionError(FarmlightError):
    """A property the simulation promises did not hold."""


def _train_artifacts(seed: int, out_dir: Path) -> dict:
    """Small but fully trained artifact set for simulation runs."""
    catalog, specs = synthgen.default_world()

    def split(name: str, per_class: int) -> list:
        rng = Rng(derive_seed(seed, f"simdata/{name}"))
        obs = []
        for spec in specs:
            for _ in range(per_class):
                obs.append(synthgen.gen_observation(spec, rng))
        rng.shuffle(obs)
        return obs

    train, val = split("train", 100), split("val", 20)
    result = run_pipeline(train, val, catalog, out_dir, seed)
    return result["artifacts"]


def _load(path: str | Path) -> bytes:
    return Path(path).read_bytes()


class SimWorld:
    """Wired topology: per-edge link pairs to the gateway and on to the cloud."""

    def __init__(self, seed: int, n_edges: int, drop_rate: float,
                 start_artifact: bytes, policy: EdgePolicy | None = None):
        self.seed = seed
        self.net = SimNet()
        self.scheduler = SimScheduler(self.net)
        self.store = TelemetryStore()
        self.registry = ModelRegistry()
        self.cloud = CloudNode(self.store, self.registry)
        self.gateway = Gateway()
        self.policy = policy or EdgePolicy(
            alert_threshold=0.7, idle_secs=1.0, batch_max=16,
            model_check_interval_secs=5.0)
        self.edges: list = []
        self.links: list = []
        for i in range(n_edges):
            self._wire_edge(i, drop_rate, start_artifact)

    def _link(self, name: str, drop: float) -> LossyLink:
        link = LossyLink(self.net, derive_seed(self.seed, f"link/{name}"),
                         drop_rate=drop, latency=0.01, jitter=0.005, name=name)
        self.links.append(link)
        return link

    def _wire_edge(self, index: int, drop_rate: float, start_artifact: bytes) -> None:
        edge_id = f"edge-{index}"
        e2g = self._link(f"{edge_id}/up", drop_rate)
        g2e = self._link(f"{edge_id}/down", drop_rate)
        # Gateway-to-cloud hops are modeled reliable; the drops under test
        # live on the field links.
        g2c = self._link(f"{edge_id}/gw-up", 0.0)
        c2g = self._link(f"{edge_id}/gw-down", 0.0)

        runtime = EdgeRuntime(
            edge_id=edge_id, policy=self.policy,
            catalog=synthgen.default_world()[0], scheduler=self.scheduler,
            send_frame=e2g.send, seed=derive_seed(self.seed, f"rt/{index}"),
            request_timeout_secs=0.5)
        runtime.install_model(start_artifact)

        e2g.connect(lambda raw, i=index, up=g2c, down=g2e: self.gateway.from_edge(
            f"edge-{i}", raw, up.send, down.send,
            now_ms=int(self.net.now * 1000)))
        g2c.connect(lambda raw, back=c2g: self._cloud_receive(raw, back))
        c2g.connect(lambda raw, i=index, down=g2e: self.gateway.from_cloud(
            f"edge-{i}", raw, down.send, now_ms=int(self.net.now * 1000)))
        g2e.connect(runtime.on_frame)
        self.edges.append(runtime)

    def _cloud_receive(self, raw: bytes, reply_link: LossyLink) -> None:
        try:
            message = msg.decode(raw)
        except DecodeError:
            return  # gateway validates; a decode failure here is a dropped frame
        reply = self.cloud.handle(message)
        if reply is not None:
            reply_link.send(msg.encode(reply))

    def frame_stats(self) -> dict:
        return {
            "sent": sum(l.sent for l in self.links),
            "dropped": sum(l.dropped for l in self.links),
            "delivered": sum(l.delivered for l in self.links),
        }


def run_e2e(seed: int = 0, n_edges: int = 3, drop_rate: float = 0.2,
            artifacts_dir: str | Path | None = None,
            obs_per_edge: int = 12, publish_at: float = 6.0,
            horizon: float = 400.0) -> dict:
    """Full scenario; returns a deterministic summary and raises
    SimAssertionError if a promised property fails."""
    if artifacts_dir is not None:
        artifacts_dir = Path(artifacts_dir)
        start_path = artifacts_dir / "student_sft.flsm"
        final_path = artifacts_dir / "student_final.flsm"
        if not (start_path.exists() and final_path.exists()):
            _train_artifacts(seed, artifacts_dir)
        start_bytes = _load(start_path)
        final_bytes = _load(final_path)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            paths = _train_artifacts(seed, Path(tmp))
            start_bytes = _load(paths["student_sft"])
            final_bytes = _load(paths["student_final"])

    world = SimWorld(seed, n_edges, drop_rate, start_bytes)
    net = world.net
    catalog, specs = synthgen.default_world()
    published_version = model_mod.load(final_bytes)[2]["version_id"]

    # Observation streams: a seeded healthy/anomalous mix per edge.
    injected = []
    for i, runtime in enumerate(world.edges):
        rng = Rng(derive_seed(seed, f"obs/{i}"))
        for j in range(obs_per_edge):
            class_id = rng.below(len(specs))
            obs = synthgen.gen_observation(specs[class_id], rng)
            injected.append((runtime.edge_id, obs.obs_id, class_id))

            def inject(rt=runtime, o=obs):
                rt.ingest(o)

            net.at(1.0 + j * 0.4 + i * 0.13, inject)

    net.at(publish_at, lambda: world.registry.publish(
        final_bytes, published_ms=int(net.now * 1000)))

    for runtime in world.edges:
        runtime.start_sync()

    interval = world.policy.model_check_interval_secs
    convergence_deadline = publish_at + 10.0 * interval

    def converged() -> bool:
        return all(rt.model_version() == published_version for rt in world.edges)

    def drained() -> bool:
        return all(not rt._outbox and rt._acked == len(rt._telemetry)
                   for rt in world.edges)

    t = 0.0
    while t < horizon:
        t += interval
        net.run(until=t)
        if converged() and drained():
            break

    swap_times = {}
    for runtime in world.edges:
        swaps = [e for e in runtime.log if e["event"] == "model_swapped"
                 and e.get("version_id") == published_version]
        swap_times[runtime.edge_id] = swaps[0]["ts_ms"] / 1000.0 if swaps else None

    for runtime in world.edges:
        runtime.stop()

    generated_batches = set()
    for runtime in world.edges:
        generated_batches.update(runtime.formed_batch_ids)
    stored_batches = {batch for (_edge, batch) in world.store.batch_ids()}
    expected_records = sum(len(rt._telemetry) for rt in world.edges)
    anomalies = sum(1 for (_, _, cid) in injected if cid != 0)
    alerts_generated = sum(len(rt.alerts) for rt in world.edges)

    summary = {
        "seed": seed,
        "edges": n_edges,
        "drop_rate": drop_rate,
        "published_version": published_version,
        "edge_versions": {rt.edge_id: rt.model_version() for rt in world.edges},
        "converged": converged(),
        "swap_times_s": swap_times,
        "convergence_deadline_s": convergence_deadline,
        "observations_injected": len(injected),
        "anomalies_injected": anomalies,
        "alerts_generated": alerts_generated,
        "alerts_pushed_to_cloud": len(world.cloud.alerts),
        "batches_generated": sorted(generated_batches),
        "batches_stored": sorted(stored_batches),
        "records_generated": expected_records,
        "records_stored": world.store.record_count(),
        "frames": world.frame_stats(),
        "sim_time_s": net.now,
    }

    if not converged():
        raise SimAssertionError(
            f"not all edges converged to {published_version}: "
            f"{summary['edge_versions']}")
    late = {k: v for k, v in swap_times.items()
            if v is None or v > convergence_deadline}
    if late:
        raise SimAssertionError(
            f"edges converged after the 10-interval deadline: {late}")
    if stored_batches != generated_batches:
        missing = generated_batches - stored_batches
        extra = stored_batches - generated_batches
        raise SimAssertionError(
            f"telemetry batch mismatch: missing={sorted(missing)} extra={sorted(extra)}")
    if world.store.record_count() != expected_records:
        raise SimAssertionError(
            f"record count mismatch: stored {world.store.record_count()}, "
            f"generated {expected_records}")

    # Every correctly classified anomaly must have produced an alert.
    correct_anomaly_alerts = 0
    explained = 0
    by_obs = {}
    for runtime in world.edges:
        for rec in runtime._telemetry:
            by_obs[rec["obs"]["obs_id"]] = rec
    for edge_id, obs_id, class_id in injected:
        if class_id == 0:
            continue
        rec = by_obs[obs_id]
        if rec["diagnosis"]["predicted"] == class_id and rec["alert"] is None:
            raise SimAssertionError(
                f"anomalous {obs_id} (class {class_id}) predicted correctly "
                f"but produced no alert")
        if rec["alert"] is not None:
            correct_anomaly_alerts += 1
        else:
            explained += 1
    summary["anomalies_alerted"] = correct_anomaly_alerts
    summary["anomalies_missed_by_model"] = explained
    return summary


def _artifact_bytes(artifact: bytes | str | Path) -> bytes:
    if isinstance(artifact, (str, Path)):
        return _load(artifact)
    return artifact


def closed_loop_trials(artifact: bytes | str | Path, n_trials: int = 200,
                       seed: int = 0) -> dict:
    """Inject one anomaly + one follow-up per trial; the alert must exist
    before the follow-up is processed."""
    artifact = _artifact_bytes(artifact)
    catalog, specs = synthgen.default_world()
    results = {"trials": n_trials, "alerted": 0, "failures": []}
    for trial in range(n_trials):
        rng = Rng(derive_seed(seed, f"cl/{trial}"))
        class_id = 1 + rng.below(len(specs) - 1)
        anomaly = synthgen.gen_observation(specs[class_id], rng)
        follow = synthgen.gen_observation(specs[0], rng)

        net = SimNet()
        runtime = EdgeRuntime(
            edge_id=f"trial-{trial}", policy=EdgePolicy(),
            catalog=catalog, scheduler=SimScheduler(net), seed=trial)
        runtime.install_model(artifact)

        alert_seen_before_follow = {"value": False}
        processed = []

        def watch(alert, anomaly_id=anomaly.obs_id, flag=alert_seen_before_follow):
            if alert.obs_id == anomaly_id and not processed:
                flag["value"] = True

        runtime.subscribe_alerts(watch)

        original_process = runtime._process

        def tracking_process(obs, rt=runtime, follow_id=follow.obs_id):
            original_process(obs)
            if obs.obs_id == follow_id:
                processed.append(obs.obs_id)

        runtime._process = tracking_process
        runtime.ingest(anomaly)
        runtime.ingest(follow)
        net.run()

        if alert_seen_before_follow["value"]:
            results["alerted"] += 1
        else:
            diagnosis = runtime._telemetry[0]["diagnosis"]
            results["failures"].append({
                "trial": trial, "true_class": class_id,
                "predicted": diagnosis["predicted"],
                "confidence": diagnosis["confidence"],
            })
    results["rate"] = results["alerted"] / n_trials
    return results


def hot_swap_trials(start_artifact: bytes | str | Path,
                    new_artifact: bytes | str | Path,
                    n_trials: int = 100, seed: int = 0) -> dict:
    """Corrupt one random bit of one random chunk per trial; the swap must
    abort and the prior model must keep serving."""
    start_artifact = _artifact_bytes(start_artifact)
    new_artifact = _artifact_bytes(new_artifact)
    catalog, specs = synthgen.default_world()
    new_meta = model_mod.load(new_artifact)[2]
    results = {"trials": n_trials, "aborted": 0, "served_after": 0}
    for trial in range(n_trials):
        rng = Rng(derive_seed(seed, f"hs/{trial}"))
        net = SimNet()
        scheduler = SimScheduler(net)
        store, registry = TelemetryStore(), ModelRegistry()
        cloud = CloudNode(store, registry)
        registry.publish(new_artifact)

        entry = registry.newest()
        corrupt_chunk = rng.below(entry.chunk_count)
        runtime = None

        def deliver(raw):
            message = msg.decode(raw)
            reply = cloud.handle(message)
            if reply is None:
                return
            if isinstance(reply, msg.ModelChunk) and reply.index == corrupt_chunk:
                chunk = bytearray(reply.chunk)
                bit = rng.below(len(chunk) * 8)
                chunk[bit // 8] ^= 1 << (bit % 8)
                reply = msg.ModelChunk(version_id=reply.version_id,
                                       index=reply.index, chunk=bytes(chunk))
            raw_reply = msg.encode(reply)
            net.after(0.001, lambda: runtime.on_frame(raw_reply))

        runtime = EdgeRuntime(
            edge_id=f"hs-{trial}",
            policy=EdgePolicy(idle_secs=0.2, model_check_interval_secs=0.5),
            catalog=catalog, scheduler=scheduler,
            send_frame=lambda raw: net.after(0.001, lambda: deliver(raw)),
            seed=trial, request_timeout_secs=0.5)
        runtime.install_model(start_artifact)
        old_version = runtime.model_version()

        runtime.start_sync()
        net.run(until=3.0)
        runtime.stop()

        if runtime.integrity_failures >= 1 and runtime.model_version() == old_version:
            results["aborted"] += 1
        obs = synthgen.gen_observation(specs[3], rng)
        diagnosis = runtime.diagnose(obs)
        if diagnosis.model_version == old_version:
            results["served_after"] += 1
    return results
