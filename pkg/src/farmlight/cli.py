"""Command-line entry point.

Subcommands cover the whole loop: dataset generation, distillation,
gradient checking, benchmark evaluation, live node processes, and the
deterministic end-to-end simulation. Exit codes: 0 success, 1 named
failure (assertion, missing precondition, I/O), 2 usage error.

A config file (`--config PATH`, canonical JSON) supplies defaults; flags
given on the command line win.
"""

from __future__ import annotations

import argparse
import signal
import sys
import time
from pathlib import Path

from . import jsoncanon

DEFAULT_SEED = 0


class CliError(Exception):
    """Named failure: message to stderr, exit 1."""


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = jsoncanon.loads(Path(path).read_bytes())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CliError(f"config {path} must be a JSON object")
    return data


def _resolve(args, config: dict, key: str, default=None):
    """Flag value if given, else config file value, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _emit(args, summary: dict, human_lines: list[str]) -> None:
    if getattr(args, "json", False):
        print(jsoncanon.dumps(summary))
    else:
        for line in human_lines:
            print(line)


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise CliError(f"address must be host:port, got {text!r}")
    return host, int(port)


# -- synth gen --------------------------------------------------------------

def cmd_synth_gen(args, config: dict) -> int:
    from . import synthgen

    seed = int(_resolve(args, config, "seed", DEFAULT_SEED))
    out = Path(_resolve(args, config, "out") or "")
    if not str(out):
        raise CliError("synth gen requires --out DIR")
    per_class = int(_resolve(args, config, "per_class", 250))
    if per_class < 1:
        raise CliError("--per-class must be >= 1")
    eval_per_class = max(1, per_class // 5)
    world = synthgen.default_world()
    n_classes = len(world[1])

    files = {}
    for split, count in (("train", per_class), ("val", eval_per_class),
                         ("test", eval_per_class)):
        path, manifest = synthgen.gen_dataset(
            world, [count] * n_classes, seed, split, out)
        files[split] = {"path": str(path), "n": manifest.n_records,
                        "sha256": manifest.file_sha256}
    summary = {"command": "synth gen", "out": str(out), "seed": seed,
               "per_class": per_class, "classes": n_classes, "files": files}
    _emit(args, summary, [
        f"world: {n_classes} classes, seed {seed}",
        *(f"  {split}: {info['n']} observations -> {info['path']}"
          for split, info in files.items()),
    ])
    return 0


# -- distill ----------------------------------------------------------------

def _load_split(data_dir: Path, split: str):
    from . import synthgen

    path = data_dir / f"{split}.ndjson.z"
    if not path.exists():
        raise CliError(f"no {split} dataset at {path} (run `synth gen` first)")
    return synthgen.load_dataset(path)


def _load_artifact(path: str | None, what: str):
    from . import model as model_mod

    if path is None:
        raise CliError(f"stage needs {what} (--{what} FILE)")
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {what} artifact {path}: {exc}") from exc
    return model_mod.load(data)


def cmd_distill(args, config: dict) -> int:
    from . import distill, model as model_mod, synthgen

    seed = int(_resolve(args, config, "seed", DEFAULT_SEED))
    data_dir = Path(_resolve(args, config, "data") or "")
    out_dir = Path(_resolve(args, config, "out") or "")
    if not str(data_dir) or not str(out_dir):
        raise CliError("distill requires --data DIR and --out DIR")
    stage = args.stage
    train = _load_split(data_dir, "train")
    val = _load_split(data_dir, "val")
    catalog, _specs = synthgen.default_world()
    out_dir.mkdir(parents=True, exist_ok=True)

    if stage == "all":
        result = distill.run_pipeline(train, val, catalog, out_dir, seed)
        summary = {
            "command": "distill", "stage": "all", "seed": seed,
            "artifacts": {k: str(v) for k, v in result["artifacts"].items()},
            "versions": result["versions"],
            "val_accuracy": {
                s: r.final_val_accuracy for s, r in result["reports"].items()},
        }
        _emit(args, summary, [
            f"pipeline complete (seed {seed})",
            *(f"  {name}: {path}" for name, path in summary["artifacts"].items()),
            *(f"  val[{s}] = {a:.4f}" for s, a in summary["val_accuracy"].items()
              if a is not None),
        ])
        return 0

    # single stage
    epochs = _resolve(args, config, "epochs")
    cfg_kwargs = {"stage": stage, "seed": seed}
    if epochs is not None:
        cfg_kwargs["epochs"] = int(epochs)
    else:
        cfg_kwargs["epochs"] = distill.DEFAULT_EPOCHS[stage]
    stage_cfg = distill.StageConfig(**cfg_kwargs)

    needs_teacher = stage in ("dpt", "dft")
    teacher = None
    if needs_teacher:
        if args.teacher is None:
            raise CliError(
                f"stage {stage} distills from a teacher: pass --teacher FILE")
        t_params, t_config, _ = _load_artifact(args.teacher, "teacher")
        teacher = (t_params, t_config)

    from .rng import derive_seed

    if stage == "teacher_pretrain":
        t_config = model_mod.teacher_config()
        student = (model_mod.init(t_config, derive_seed(seed, "init/teacher")),
                   t_config)
    elif args.student is not None:
        s_params, s_config, _ = _load_artifact(args.student, "student")
        student = (s_params, s_config)
    elif stage == "dpt":
        s_config = model_mod.student_config()
        student = (model_mod.init(s_config, derive_seed(seed, "init/student")),
                   s_config)
    else:
        raise CliError(f"stage {stage} continues training: pass --student FILE")

    params, report = distill.train_stage(student, teacher, train, stage_cfg,
                                         val=val)
    out_path = out_dir / f"{stage}.flsm"
    version = model_mod.compute_version_id(params, stage)
    out_path.write_bytes(model_mod.save(params, student[1],
                                        {"version_id": version, "stage": stage}))
    summary = {
        "command": "distill", "stage": stage, "seed": seed,
        "artifact": str(out_path), "version_id": version,
        "epochs": stage_cfg.epochs,
        "final_loss": report.epoch_losses[-1]["loss"] if report.epoch_losses else None,
        "val_accuracy": report.final_val_accuracy,
    }
    _emit(args, summary, [
        f"{stage}: {stage_cfg.epochs} epochs, final loss "
        f"{summary['final_loss']:.6f}" if summary["final_loss"] is not None
        else f"{stage}: 0 epochs",
        f"  artifact {out_path} (version {version})",
    ])
    return 0


# -- gradcheck ---------------------------------------------------------------

def cmd_gradcheck(args, config: dict) -> int:
    from . import distill

    seed = int(_resolve(args, config, "seed", DEFAULT_SEED))
    samples = int(_resolve(args, config, "samples", 50))
    tolerance = float(_resolve(args, config, "tolerance", 1e-4))
    result = distill.gradcheck_suite(n_coords=samples, seed=seed)
    summary = {
        "command": "gradcheck", "seed": seed, "samples": samples,
        "tolerance": tolerance, "max_rel_err": result["max_rel_err"],
        "stages": {s: r["max_rel_err"] for s, r in result["stages"].items()},
        "ok": result["max_rel_err"] <= tolerance,
    }
    _emit(args, summary, [
        *(f"  {s}: max rel err {e:.3e}" for s, e in summary["stages"].items()),
        f"worst {summary['max_rel_err']:.3e} "
        f"({'OK' if summary['ok'] else 'FAIL'} at {tolerance:g})",
    ])
    return 0 if summary["ok"] else 1


# -- eval ---------------------------------------------------------------------

def cmd_eval(args, config: dict) -> int:
    from . import evalbench, synthgen

    seed = int(_resolve(args, config, "seed", DEFAULT_SEED))
    model_path = _resolve(args, config, "model")
    data_dir = Path(_resolve(args, config, "data") or "")
    if model_path is None or not str(data_dir):
        raise CliError("eval requires --model FILE and --data DIR")
    observations = _load_split(data_dir, "test")
    catalog, _specs = synthgen.default_world()
    try:
        report = evalbench.evaluate_artifact(model_path, observations,
                                             catalog, seed=seed)
    except OSError as exc:
        raise CliError(f"cannot read model {model_path}: {exc}") from exc
    if args.report:
        Path(args.report).write_bytes(report.to_json())
    summary = {"command": "eval", "seed": seed, **report.to_dict()}
    _emit(args, summary, [
        f"closed accuracy {report.closed_accuracy:.4f}  "
        f"open F1 {report.open_f1:.4f}  "
        f"classification {report.classification_accuracy():.4f}",
        f"n_samples {report.n_samples}  model {report.model_version}",
        *( [f"report -> {args.report}"] if args.report else [] ),
    ])
    return 0


# -- run (live nodes) ---------------------------------------------------------

def _wait_forever(duration: float | None, stop_flag: dict) -> None:
    deadline = None if duration is None else time.monotonic() + duration
    while not stop_flag["stop"]:
        if deadline is not None and time.monotonic() >= deadline:
            break
        time.sleep(0.1)


def _install_signals(stop_flag: dict) -> None:
    def handler(_signum, _frame):
        stop_flag["stop"] = True

    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            signal.signal(sig, handler)
        except ValueError:
            pass  # not the main thread (tests drive this inline)


def cmd_run_cloud(args, config: dict) -> int:
    from .netproto import tcp
    from .netproto.cloud import CloudNode, ModelRegistry, TelemetryStore

    host, port = _parse_addr(_resolve(args, config, "listen", "127.0.0.1:7710"))
    data_dir = _resolve(args, config, "data")
    root = Path(data_dir) if data_dir else None
    registry = ModelRegistry(root / "registry" if root else None)
    store = TelemetryStore(root / "telemetry" if root else None)
    cloud = CloudNode(store, registry)
    for artifact in args.publish or []:
        registry.publish(Path(artifact).read_bytes())
    server = tcp.CloudServer(cloud, host, port)
    server.start()
    print(f"cloud listening on {server.host}:{server.port} "
          f"({len(registry.version_ids())} model(s) registered)", flush=True)
    stop_flag = {"stop": False}
    _install_signals(stop_flag)
    try:
        _wait_forever(args.duration, stop_flag)
    finally:
        server.stop()
    return 0


def cmd_run_gateway(args, config: dict) -> int:
    from .netproto import tcp

    host, port = _parse_addr(_resolve(args, config, "listen", "127.0.0.1:7720"))
    cloud_addr = _parse_addr(_resolve(args, config, "cloud", "127.0.0.1:7710"))
    server = tcp.GatewayServer(cloud_addr, host, port)
    server.start()
    print(f"gateway listening on {server.host}:{server.port} "
          f"-> cloud {cloud_addr[0]}:{cloud_addr[1]}", flush=True)
    stop_flag = {"stop": False}
    _install_signals(stop_flag)
    try:
        _wait_forever(args.duration, stop_flag)
    finally:
        server.stop()
    return 0


def cmd_run_edge(args, config: dict) -> int:
    from . import synthgen
    from .edge import EdgeApiServer, EdgePolicy, EdgeRuntime
    from .netproto import tcp
    from .simnet import LiveScheduler

    data_dir = _resolve(args, config, "data")
    # A node-local edge.json (EdgePolicy + endpoints) overrides the global
    # config file; explicit flags still win over both.
    if data_dir:
        local = Path(data_dir) / "edge.json"
        if local.exists():
            node_cfg = jsoncanon.loads(local.read_bytes())
            if not isinstance(node_cfg, dict):
                raise CliError(f"{local} must hold a JSON object")
            config = {**config, **node_cfg}
    seed = int(_resolve(args, config, "seed", DEFAULT_SEED))
    edge_id = _resolve(args, config, "edge_id", "edge-0")
    api_host, api_port = _parse_addr(
        _resolve(args, config, "api", "127.0.0.1:7780"))
    policy_overrides = config.get("policy", {})
    policy = EdgePolicy.from_dict(policy_overrides) if policy_overrides \
        else EdgePolicy()

    catalog, _specs = synthgen.default_world()
    scheduler = LiveScheduler()
    runtime = EdgeRuntime(
        edge_id=edge_id, policy=policy, catalog=catalog, scheduler=scheduler,
        data_dir=Path(data_dir) if data_dir else None, seed=seed)
    if args.model:
        runtime.install_model(Path(args.model).read_bytes())

    client = None
    gateway_addr = _resolve(args, config, "gateway")
    if gateway_addr:
        client = tcp.EdgeClient(runtime, _parse_addr(gateway_addr))
        runtime._send_frame = client.send
        client.start()
        runtime.start_sync()

    api = EdgeApiServer(runtime, api_host, api_port)
    api.start()
    print(f"edge {edge_id} api on {api.base_url}"
          + (f", synced via {gateway_addr}" if gateway_addr else ", offline"),
          flush=True)
    stop_flag = {"stop": False}
    _install_signals(stop_flag)
    try:
        _wait_forever(args.duration, stop_flag)
    finally:
        api.stop()
        if client is not None:
            client.close()
        runtime.stop()
        scheduler.close()
    return 0


# -- sim ------------------------------------------------------------------------

def cmd_sim_e2e(args, config: dict) -> int:
    from . import sim_e2e

    seed = int(_resolve(args, config, "seed", DEFAULT_SEED))
    edges = int(_resolve(args, config, "edges", 3))
    drop = float(_resolve(args, config, "drop", 0.2))
    artifacts = _resolve(args, config, "artifacts")
    try:
        summary = sim_e2e.run_e2e(seed=seed, n_edges=edges, drop_rate=drop,
                                  artifacts_dir=artifacts)
    except sim_e2e.SimAssertionError as exc:
        print(f"sim e2e failed: {exc}", file=sys.stderr)
        return 1
    _emit(args, summary, [
        f"sim e2e: {edges} edges, {drop:.0%} frame loss, seed {seed}",
        f"  converged {summary['converged']} "
        f"(swaps at {sorted(summary['swap_times_s'].values())} s)",
        f"  telemetry {summary['records_stored']}/{summary['records_generated']}"
        f" records, batches exact: "
        f"{summary['batches_stored'] == summary['batches_generated']}",
        f"  alerts {summary['alerts_generated']} raised, "
        f"{summary['alerts_pushed_to_cloud']} pushed upstream",
        f"  frames {summary['frames']['sent']} sent / "
        f"{summary['frames']['dropped']} dropped",
        f"  sim clock {summary['sim_time_s']} s",
    ])
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    # Global flags live on a parent parser attached to every leaf command,
    # so `farmlight synth gen --seed 5` and `farmlight --seed 5 synth gen`
    # both work. SUPPRESS keeps an unset leaf flag from clobbering a value
    # parsed at the root.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="canonical JSON config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master RNG seed")
    common.add_argument("--json", action="store_true",
                        default=argparse.SUPPRESS,
                        help="print summaries as canonical JSON")

    parser = argparse.ArgumentParser(
        prog="farmlight",
        description="Desk-scale crop-diagnosis stack: synthetic data, "
                    "distillation, wire protocol, edge runtime, benchmarks.",
        parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthetic world tools")
    synth_sub = synth.add_subparsers(dest="synth_command", required=True)
    gen = synth_sub.add_parser("gen", parents=[common],
                               help="generate train/val/test datasets")
    gen.add_argument("--out", help="output directory")
    gen.add_argument("--per-class", dest="per_class", type=int,
                     help="training observations per class (default 250)")
    gen.set_defaults(func=cmd_synth_gen)

    dist = sub.add_parser("distill", parents=[common], help="train teacher/student stages")
    dist.add_argument("--stage", required=True,
                      choices=("all", "teacher_pretrain", "dpt", "sft", "dft"))
    dist.add_argument("--data", help="dataset directory")
    dist.add_argument("--out", help="artifact output directory")
    dist.add_argument("--teacher", help="teacher artifact (.flsm)")
    dist.add_argument("--student", help="student artifact to continue from")
    dist.add_argument("--epochs", type=int)
    dist.set_defaults(func=cmd_distill)

    grad = sub.add_parser("gradcheck", parents=[common],
                          help="finite-difference gradient verification")
    grad.add_argument("--samples", type=int, help="coordinates per stage")
    grad.add_argument("--tolerance", type=float)
    grad.set_defaults(func=cmd_gradcheck)

    ev = sub.add_parser("eval", parents=[common], help="closed/open benchmark over a dataset")
    ev.add_argument("--model", help="model artifact (.flsm)")
    ev.add_argument("--data", help="dataset directory (uses test split)")
    ev.add_argument("--report", help="write EvalReport JSON here")
    ev.set_defaults(func=cmd_eval)

    run = sub.add_parser("run", help="long-running node processes")
    run_sub = run.add_subparsers(dest="run_command", required=True)
    cloud = run_sub.add_parser("cloud", parents=[common])
    cloud.add_argument("--listen", help="host:port (default 127.0.0.1:7710)")
    cloud.add_argument("--data", help="persistence root (registry/, telemetry/)")
    cloud.add_argument("--publish", action="append",
                       help="model artifact to register at startup")
    cloud.add_argument("--duration", type=float,
                       help="exit after N seconds (default: run until signal)")
    cloud.set_defaults(func=cmd_run_cloud)
    gateway = run_sub.add_parser("gateway", parents=[common])
    gateway.add_argument("--listen", help="host:port (default 127.0.0.1:7720)")
    gateway.add_argument("--cloud", help="cloud host:port")
    gateway.add_argument("--duration", type=float)
    gateway.set_defaults(func=cmd_run_gateway)
    edge = run_sub.add_parser("edge", parents=[common])
    edge.add_argument("--edge-id", dest="edge_id")
    edge.add_argument("--api", help="HTTP API host:port (default 127.0.0.1:7780)")
    edge.add_argument("--gateway", help="gateway host:port (omit to run offline)")
    edge.add_argument("--data", help="durable state directory")
    edge.add_argument("--model", help="initial model artifact")
    edge.add_argument("--duration", type=float)
    edge.set_defaults(func=cmd_run_edge)

    sim = sub.add_parser("sim", help="deterministic multi-node simulations")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    e2e = sim_sub.add_parser("e2e", parents=[common], help="cloud+gateway+edges under frame loss")
    e2e.add_argument("--edges", type=int, help="edge count (default 3)")
    e2e.add_argument("--drop", type=float, help="frame drop rate (default 0.2)")
    e2e.add_argument("--artifacts", help="directory of trained artifacts "
                                         "(trained on demand when omitted)")
    e2e.set_defaults(func=cmd_sim_e2e)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
