"""Teacher pretraining and the three-stage student distillation pipeline.

Stages:
  teacher_pretrain  cross-entropy on labels, full trainable set
  dpt               projector only, aligned to teacher (response KL +
                    visual-saliency KL + autocorrelation cosine)
  sft               cross-entropy on labels, projector + text/head block
  dft               cross-entropy plus the three alignment terms

The visual encoder is frozen in every stage: its gradients are never even
computed. Optimization is plain SGD with momentum, f64 math over f32
parameters, bit-reproducible for a fixed (params, dataset, config).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fusion, jsoncanon, model as model_mod
from .domain import ClassCatalog, ContractViolation, FarmlightError, NumericFault, Observation
from .model import (
    BatchTrace,
    ForwardTrace,
    ModelConfig,
    ModelParams,
    forward_batch,
    softmax,
)
from .rng import Rng, derive_seed

STAGES = ("teacher_pretrain", "dpt", "sft", "dft")

_FULL_TRAINABLE = ("w_proj", "b_proj", "w_txt", "b_txt", "w_h1", "b_h1", "w_h2", "b_h2")
TRAINABLE_BY_STAGE = {
    "teacher_pretrain": _FULL_TRAINABLE,
    "dpt": ("w_proj", "b_proj"),
    "sft": _FULL_TRAINABLE,
    "dft": _FULL_TRAINABLE,
}

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class StageConfig:
    stage: str
    epochs: int
    batch_size: int = 32
    lr: float = 0.05
    momentum: float = 0.9
    alpha: float = 1.0   # response-KL weight
    beta: float = 1.0    # visual-KL weight
    gamma: float = 1.0   # autocorrelation weight
    delta: float = 1.0   # ground-truth CE weight (dft)
    seed: int = 0
    kl_direction: str = "forward"  # forward = KL(teacher || student)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ContractViolation(f"unknown stage {self.stage!r}")
        if self.epochs < 1:
            raise ContractViolation("epochs must be >= 1")
        if self.batch_size < 1:
            raise ContractViolation("batch_size must be >= 1")
        if self.lr <= 0.0:
            raise ContractViolation("lr must be > 0")
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0.0:
            raise ContractViolation("loss weights must be >= 0")
        if self.kl_direction not in ("forward", "reverse"):
            raise ContractViolation(f"bad kl_direction {self.kl_direction!r}")

    def to_dict(self) -> dict:
        return {
            "stage": self.stage, "epochs": self.epochs, "batch_size": self.batch_size,
            "lr": self.lr, "momentum": self.momentum, "alpha": self.alpha,
            "beta": self.beta, "gamma": self.gamma, "delta": self.delta,
            "seed": self.seed, "kl_direction": self.kl_direction,
        }


DEFAULT_EPOCHS = {"teacher_pretrain": 30, "dpt": 15, "sft": 15, "dft": 15}


def default_stage_configs(seed: int) -> dict:
    return {
        stage: StageConfig(stage=stage, epochs=DEFAULT_EPOCHS[stage], seed=seed)
        for stage in STAGES
    }


@dataclass
class TrainReport:
    stage: str
    epoch_losses: list            # per-epoch {"loss": float, "components": {...}}
    frozen_pre: dict              # tensor name -> sha256 hex
    frozen_post: dict
    final_val_accuracy: float | None
    wall_secs: float

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "epoch_losses": self.epoch_losses,
            "frozen_pre": self.frozen_pre,
            "frozen_post": self.frozen_post,
            "final_val_accuracy": self.final_val_accuracy,
            "wall_secs": self.wall_secs,
        }


def kl_div(p, q) -> float:
    """KL(p || q) in nats; terms with p_i = 0 contribute zero."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ContractViolation(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, dist in (("p", p), ("q", q)):
        if np.any(dist < 0.0):
            raise ContractViolation(f"{name} has negative entries")
        if abs(float(dist.sum()) - 1.0) > 1e-6:
            raise ContractViolation(f"{name} does not sum to 1 (got {dist.sum()!r})")
    mask = p > 0.0
    terms = p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], _LOG_FLOOR)))
    return float(terms.sum())


def corr_loss(a_s, a_t) -> float:
    """1 - cosine similarity of the flattened autocorrelation matrices."""
    a_s = np.asarray(a_s, dtype=np.float64)
    a_t = np.asarray(a_t, dtype=np.float64)
    if a_s.shape != a_t.shape or a_s.ndim != 2 or a_s.shape[0] != a_s.shape[1]:
        raise ContractViolation(f"shape mismatch: {a_s.shape} vs {a_t.shape}")
    dot = float((a_s * a_t).sum())
    denom = float(np.linalg.norm(a_s) * np.linalg.norm(a_t))
    cos = dot / max(denom, _LOG_FLOOR)
    # Clamp float-eps excursions at the boundaries of the admissible range.
    return min(2.0, max(0.0, 1.0 - cos))


def _cross_entropy(p_t1: np.ndarray, label: int) -> float:
    return float(-np.log(max(float(p_t1[label]), _LOG_FLOOR)))


def _kl_pair(cfg_dir: str, teacher_dist, student_dist) -> float:
    if cfg_dir == "forward":
        return kl_div(teacher_dist, student_dist)
    return kl_div(student_dist, teacher_dist)


def stage_loss(
    stage: str,
    student: ForwardTrace,
    teacher: ForwardTrace | None,
    label: int | None,
    config: StageConfig,
) -> tuple[float, dict]:
    """Single-sample stage loss; returns (weighted total, raw components)."""
    if stage not in STAGES:
        raise ContractViolation(f"unknown stage {stage!r}")
    needs_teacher = stage in ("dpt", "dft")
    needs_label = stage in ("teacher_pretrain", "sft", "dft")
    if needs_teacher and teacher is None:
        raise ContractViolation(f"stage {stage} requires a teacher trace")
    if needs_label and label is None:
        raise ContractViolation(f"stage {stage} requires a label")

    components: dict = {}
    total = 0.0
    if needs_label:
        p_t1 = softmax(student.logits)
        components["ce"] = _cross_entropy(p_t1, label)
        total += (config.delta if stage == "dft" else 1.0) * components["ce"]
    if needs_teacher:
        components["resp_kl"] = _kl_pair(config.kl_direction, teacher.p_resp, student.p_resp)
        components["vis_kl"] = _kl_pair(config.kl_direction, teacher.p_vis, student.p_vis)
        components["corr"] = corr_loss(student.a, teacher.a)
        total += (
            config.alpha * components["resp_kl"]
            + config.beta * components["vis_kl"]
            + config.gamma * components["corr"]
        )
    return total, components


@dataclass
class TeacherTargets:
    """Teacher-side distributions, precomputed once per dataset."""
    p_resp: np.ndarray   # [N, K]
    p_vis: np.ndarray    # [N, T]
    a: np.ndarray        # [N, T, T]


def teacher_targets(params: ModelParams, config: ModelConfig,
                    patches: np.ndarray, feats: np.ndarray) -> TeacherTargets:
    bt = forward_batch(params, config, patches, feats)
    return TeacherTargets(p_resp=bt.p_resp, p_vis=bt.p_vis, a=bt.a)


def _kl_terms_batch(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) for stacked distributions."""
    safe_q = np.log(np.maximum(q, _LOG_FLOOR))
    terms = np.where(p > 0.0, p * (np.log(np.maximum(p, _LOG_FLOOR)) - safe_q), 0.0)
    return terms.sum(axis=-1)


def batch_loss_and_grad(
    stage: str,
    params: ModelParams,
    config: ModelConfig,
    patches: np.ndarray,
    feats: np.ndarray,
    labels: np.ndarray | None,
    targets: TeacherTargets | None,
    cfg: StageConfig,
    want_grads: bool = True,
) -> tuple[float, dict, dict]:
    """Mean loss, mean components and analytic gradients over one batch.

    Gradients cover exactly the stage's trainable tensors; frozen tensors
    never appear in the returned dict.
    """
    bt = forward_batch(params, config, patches, feats)
    batch = patches.shape[0]
    tokens = config.t
    d_h = config.d_h
    w64 = params.astype(np.float64)

    needs_teacher = stage in ("dpt", "dft")
    needs_label = stage in ("teacher_pretrain", "sft", "dft")
    if needs_teacher and targets is None:
        raise ContractViolation(f"stage {stage} requires teacher targets")
    if needs_label and labels is None:
        raise ContractViolation(f"stage {stage} requires labels")

    # Gradients of the summed batch loss w.r.t. logits / token norms / A.
    g_logits = np.zeros_like(bt.logits)
    g_norms = np.zeros_like(bt.norms)
    g_a = None
    loss_sum = 0.0
    comp_sums: dict = {}

    if needs_label:
        onehot = np.zeros_like(bt.p_resp_t1)
        onehot[np.arange(batch), labels] = 1.0
        ce = -np.log(np.maximum(bt.p_resp_t1[np.arange(batch), labels], _LOG_FLOOR))
        ce_w = cfg.delta if stage == "dft" else 1.0
        comp_sums["ce"] = float(ce.sum())
        loss_sum += ce_w * comp_sums["ce"]
        g_logits += ce_w * (bt.p_resp_t1 - onehot)

    if needs_teacher:
        tau = config.temperature
        if cfg.kl_direction == "forward":
            resp_kl = _kl_terms_batch(targets.p_resp, bt.p_resp)
            vis_kl = _kl_terms_batch(targets.p_vis, bt.p_vis)
            g_logits += cfg.alpha * (bt.p_resp - targets.p_resp) / tau
            g_norms += cfg.beta * (bt.p_vis - targets.p_vis)
        else:
            resp_kl = _kl_terms_batch(bt.p_resp, targets.p_resp)
            vis_kl = _kl_terms_batch(bt.p_vis, targets.p_vis)
            c_resp = np.log(np.maximum(bt.p_resp, _LOG_FLOOR)) - np.log(
                np.maximum(targets.p_resp, _LOG_FLOOR))
            g_logits += cfg.alpha * bt.p_resp * (c_resp - resp_kl[:, None]) / tau
            c_vis = np.log(np.maximum(bt.p_vis, _LOG_FLOOR)) - np.log(
                np.maximum(targets.p_vis, _LOG_FLOOR))
            g_norms += cfg.beta * bt.p_vis * (c_vis - vis_kl[:, None])

        dot = (bt.a * targets.a).sum(axis=(-1, -2))
        norm_s = np.sqrt((bt.a * bt.a).sum(axis=(-1, -2)))
        norm_t = np.sqrt((targets.a * targets.a).sum(axis=(-1, -2)))
        # A carries a unit diagonal, so its Frobenius norm is >= sqrt(T)
        # and the cosine denominator floor is never active here.
        denom = np.maximum(norm_s * norm_t, _LOG_FLOOR)
        cos = dot / denom
        corr = np.clip(1.0 - cos, 0.0, 2.0)
        g_a = cfg.gamma * (
            (dot / (norm_s**3 * norm_t))[:, None, None] * bt.a
            - targets.a / denom[:, None, None]
        )
        comp_sums["resp_kl"] = float(resp_kl.sum())
        comp_sums["vis_kl"] = float(vis_kl.sum())
        comp_sums["corr"] = float(corr.sum())
        loss_sum += (cfg.alpha * comp_sums["resp_kl"] + cfg.beta * comp_sums["vis_kl"]
                     + cfg.gamma * comp_sums["corr"])

    mean_loss = loss_sum / batch
    if not np.isfinite(mean_loss):
        raise NumericFault("non-finite loss")
    components = {k: v / batch for k, v in comp_sums.items()}
    if not want_grads:
        return mean_loss, components, {}

    trainable = TRAINABLE_BY_STAGE[stage]
    grads: dict = {}

    # Head backward (gradient flows through the head in every stage, even
    # when the head itself is frozen, because logits depend on the projector).
    du = g_logits @ w64.w_h2.T
    dupre = du * bt.relu_mask
    dc = dupre @ w64.w_h1.T
    dpooled = dc[:, :d_h]
    dt = dc[:, d_h:]
    dtpre = dt * (1.0 - bt.t_feat**2)

    if "w_h2" in trainable:
        grads["w_h2"] = bt.u.T @ g_logits
        grads["b_h2"] = g_logits.sum(axis=0)
        grads["w_h1"] = bt.c.T @ dupre
        grads["b_h1"] = dupre.sum(axis=0)
        grads["w_txt"] = bt.s.T @ dtpre
        grads["b_txt"] = dtpre.sum(axis=0)

    # Token-feature gradient: pooled mean path + saliency path + A path.
    g_h = np.repeat(dpooled[:, None, :] / tokens, tokens, axis=1)
    scale = np.maximum(bt.norms, model_mod.NORM_FLOOR)
    g_h += g_norms[..., None] * (bt.h / scale[..., None])
    if g_a is not None:
        sym = g_a + np.swapaxes(g_a, -1, -2)
        g_hat = sym @ bt.h_hat
        # Derivative of h/max(||h||, eps): project when the norm is live,
        # plain 1/eps scaling in the floored regime.
        live = bt.norms > model_mod.NORM_FLOOR
        proj = (g_hat - (g_hat * bt.h_hat).sum(axis=-1, keepdims=True) * bt.h_hat)
        g_h += np.where(live[..., None], proj / scale[..., None],
                        g_hat / model_mod.NORM_FLOOR)

    grads["w_proj"] = np.einsum("btv,bth->vh", bt.z, g_h)
    grads["b_proj"] = g_h.sum(axis=(0, 1))

    for name in list(grads):
        grads[name] = grads[name] / batch
        if not np.all(np.isfinite(grads[name])):
            raise NumericFault(f"non-finite gradient for {name}")
    return mean_loss, components, {k: grads[k] for k in trainable}


def stage_grad(
    stage: str,
    params: ModelParams,
    config: ModelConfig,
    patches: np.ndarray,
    feats: np.ndarray,
    labels: np.ndarray | None,
    targets: TeacherTargets | None,
    cfg: StageConfig,
) -> dict:
    """Analytic gradient of the batch-mean stage loss, trainable set only."""
    _, _, grads = batch_loss_and_grad(
        stage, params, config, patches, feats, labels, targets, cfg)
    return grads


def featurize(observations: list[Observation]) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Stack (patches, prompt features, labels) for a list of observations."""
    patches = np.stack([fusion.patchify(o.image) for o in observations])
    feats = np.array([fusion.normalize_sensors(o.sensors) for o in observations],
                     dtype=np.float64)
    if all(o.label is not None for o in observations):
        labels = np.array([o.label for o in observations], dtype=np.int64)
    else:
        labels = None
    return patches, feats, labels


def accuracy(params: ModelParams, config: ModelConfig,
             observations: list[Observation]) -> float:
    patches, feats, labels = featurize(observations)
    if labels is None:
        raise ContractViolation("accuracy needs labeled observations")
    pred = model_mod.predict_batch(params, config, patches, feats)
    return float((pred == labels).mean())


def train_stage(
    student: tuple[ModelParams, ModelConfig],
    teacher: tuple[ModelParams, ModelConfig] | None,
    observations: list[Observation],
    cfg: StageConfig,
    val: list[Observation] | None = None,
) -> tuple[ModelParams, TrainReport]:
    """SGD with momentum over the stage's trainable set; deterministic."""
    stage = cfg.stage
    needs_teacher = stage in ("dpt", "dft")
    if needs_teacher and teacher is None:
        raise ContractViolation(f"stage {stage} requires a teacher model")
    if not needs_teacher and teacher is not None:
        raise ContractViolation(f"stage {stage} must not receive a teacher model")
    if not observations:
        raise ContractViolation("training set is empty")

    params, config = student
    params = params.copy()
    trainable = TRAINABLE_BY_STAGE[stage]
    frozen = tuple(f for f in model_mod.PARAM_FIELDS if f not in trainable)
    frozen_pre = {f: model_mod.tensor_digest(params, (f,)) for f in frozen}

    patches, feats, labels = featurize(observations)
    if stage in ("teacher_pretrain", "sft", "dft") and labels is None:
        raise ContractViolation(f"stage {stage} requires labeled observations")
    targets = None
    if needs_teacher:
        targets = teacher_targets(teacher[0], teacher[1], patches, feats)

    rng = Rng(derive_seed(cfg.seed, f"train/{stage}"))
    velocity = {name: np.zeros(getattr(params, name).shape, dtype=np.float64)
                for name in trainable}
    n = len(observations)
    started = time.monotonic()
    epoch_losses = []
    for _ in range(cfg.epochs):
        order = list(range(n))
        rng.shuffle(order)
        loss_sum = 0.0
        comp_sums: dict = {}
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            b_patches = patches[idx]
            b_feats = feats[idx]
            b_labels = labels[idx] if labels is not None else None
            b_targets = None
            if targets is not None:
                b_targets = TeacherTargets(
                    p_resp=targets.p_resp[idx], p_vis=targets.p_vis[idx], a=targets.a[idx])
            loss, comps, grads = batch_loss_and_grad(
                stage, params, config, b_patches, b_feats, b_labels, b_targets, cfg)
            loss_sum += loss * len(idx)
            for k, v in comps.items():
                comp_sums[k] = comp_sums.get(k, 0.0) + v * len(idx)
            for name in trainable:
                velocity[name] = cfg.momentum * velocity[name] + grads[name]
                updated = getattr(params, name).astype(np.float64) - cfg.lr * velocity[name]
                setattr(params, name, updated.astype(np.float32))
        epoch_losses.append({
            "loss": loss_sum / n,
            "components": {k: v / n for k, v in comp_sums.items()},
        })

    frozen_post = {f: model_mod.tensor_digest(params, (f,)) for f in frozen}
    if frozen_post != frozen_pre:
        raise FarmlightError(f"frozen tensors changed during stage {stage}")
    val_acc = accuracy(params, config, val) if val else None
    report = TrainReport(
        stage=stage,
        epoch_losses=epoch_losses,
        frozen_pre=frozen_pre,
        frozen_post=frozen_post,
        final_val_accuracy=val_acc,
        wall_secs=time.monotonic() - started,
    )
    return params, report


STUDENT_STAGE_SEQUENCE = ("dpt", "sft", "dft")


def run_pipeline(
    train: list[Observation],
    val: list[Observation],
    catalog: ClassCatalog,
    out_dir: str | Path,
    seed: int,
    stage_configs: dict | None = None,
    teacher_cfg: ModelConfig | None = None,
    student_cfg: ModelConfig | None = None,
) -> dict:
    """teacher_pretrain then DPT -> SFT -> DFT; persists one artifact per stage.

    Returns {"artifacts": {name: path}, "reports": {stage: TrainReport},
    "versions": {name: version_id}}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfgs = dict(default_stage_configs(seed))
    if stage_configs:
        cfgs.update(stage_configs)
    teacher_cfg = teacher_cfg or model_mod.teacher_config()
    student_cfg = student_cfg or model_mod.student_config()
    catalog_digest = catalog.digest_hex()

    def persist(name: str, params: ModelParams, config: ModelConfig, stage: str) -> tuple[Path, str]:
        version = model_mod.compute_version_id(params, stage)
        blob = model_mod.save(params, config, {
            "version_id": version, "stage": stage, "catalog_digest": catalog_digest,
        })
        path = out_dir / f"{name}.flsm"
        path.write_bytes(blob)
        return path, version

    artifacts: dict = {}
    versions: dict = {}
    reports: dict = {}

    def run(stage: str, student, teacher):
        try:
            return train_stage(student, teacher, train, cfgs[stage], val=val)
        except FarmlightError:
            raise
        except Exception as exc:  # pragma: no cover - defensive
            raise FarmlightError(f"stage {stage} failed: {exc}") from exc

    teacher_params = model_mod.init(teacher_cfg, derive_seed(seed, "init/teacher"))
    teacher_params, reports["teacher_pretrain"] = run(
        "teacher_pretrain", (teacher_params, teacher_cfg), None)
    artifacts["teacher"], versions["teacher"] = persist(
        "teacher", teacher_params, teacher_cfg, "teacher_pretrain")

    student_params = model_mod.init(student_cfg, derive_seed(seed, "init/student"))
    teacher = (teacher_params, teacher_cfg)
    for stage in STUDENT_STAGE_SEQUENCE:
        student_params, reports[stage] = run(
            stage, (student_params, student_cfg), teacher if stage in ("dpt", "dft") else None)
        name = f"student_{stage}"
        artifacts[name], versions[name] = persist(name, student_params, student_cfg, stage)
    artifacts["student_final"], versions["student_final"] = persist(
        "student_final", student_params, student_cfg, "final")

    report_doc = {
        "seed": seed,
        "versions": versions,
        "stages": {k: v.to_dict() for k, v in reports.items()},
    }
    (out_dir / "pipeline_report.json").write_bytes(jsoncanon.dumps_bytes(report_doc))
    return {"artifacts": artifacts, "reports": reports, "versions": versions}


def finite_diff_grad(
    stage: str,
    params: ModelParams,
    config: ModelConfig,
    patches: np.ndarray,
    feats: np.ndarray,
    labels: np.ndarray | None,
    targets: TeacherTargets | None,
    cfg: StageConfig,
    coords: list,
    h: float = 1e-4,
) -> list:
    """Central finite differences of the batch-mean loss at given coordinates.

    ``coords`` is a list of (tensor_name, flat_index). Perturbation happens
    on an f64 copy of the parameters so the step is exact.
    """
    base = params.astype(np.float64)
    out = []
    for name, flat_idx in coords:
        arr = getattr(base, name)
        orig = arr.flat[flat_idx]
        arr.flat[flat_idx] = orig + h
        plus, _, _ = batch_loss_and_grad(
            stage, base, config, patches, feats, labels, targets, cfg, want_grads=False)
        arr.flat[flat_idx] = orig - h
        minus, _, _ = batch_loss_and_grad(
            stage, base, config, patches, feats, labels, targets, cfg, want_grads=False)
        arr.flat[flat_idx] = orig
        out.append((plus - minus) / (2.0 * h))
    return out


def gradient_check(
    stage: str,
    params: ModelParams,
    config: ModelConfig,
    patches: np.ndarray,
    feats: np.ndarray,
    labels: np.ndarray | None,
    targets: TeacherTargets | None,
    cfg: StageConfig,
    n_coords: int,
    rng: Rng,
    h: float = 1e-4,
) -> dict:
    """Compare analytic gradients against central differences.

    Relative error per coordinate uses max(|fd|, |analytic|, 1e-6) as the
    denominator so near-zero coordinates are compared absolutely.
    """
    grads = stage_grad(stage, params, config, patches, feats, labels, targets, cfg)
    names = [n for n in TRAINABLE_BY_STAGE[stage]]
    coords = []
    for _ in range(n_coords):
        name = names[rng.below(len(names))]
        coords.append((name, rng.below(getattr(params, name).size)))
    fd = finite_diff_grad(stage, params, config, patches, feats, labels, targets,
                          cfg, coords, h=h)
    rows = []
    max_rel = 0.0
    for (name, idx), fd_val in zip(coords, fd):
        an_val = float(grads[name].flat[idx])
        rel = abs(fd_val - an_val) / max(abs(fd_val), abs(an_val), 1e-6)
        max_rel = max(max_rel, rel)
        rows.append({"tensor": name, "index": int(idx), "analytic": an_val,
                     "fd": fd_val, "rel_err": rel})
    return {"stage": stage, "coords": rows, "max_rel_err": max_rel,
            "n_coords": n_coords, "h": h}


def gradcheck_suite(n_coords: int = 50, seed: int = 0, h: float = 1e-4,
                    batch_size: int = 8,
                    kl_direction: str = "forward") -> dict:
    """Gradient-check every stage on one synthetic batch.

    Returns {"stages": {stage: gradient_check result}, "max_rel_err": float}.
    """
    from . import synthgen  # deliberate local import: distill stays data-agnostic

    world = synthgen.default_world()
    catalog, specs = world
    rng = Rng(derive_seed(seed, "gradcheck/data"))
    observations = [
        synthgen.gen_observation(specs[i % len(specs)], rng)
        for i in range(batch_size)
    ]
    patches, feats, labels = featurize(observations)

    teacher_cfg = model_mod.teacher_config()
    student_cfg = model_mod.student_config()
    teacher = model_mod.init(teacher_cfg, derive_seed(seed, "gradcheck/teacher"))
    student = model_mod.init(student_cfg, derive_seed(seed, "gradcheck/student"))
    targets = teacher_targets(teacher, teacher_cfg, patches, feats)

    results = {}
    worst = 0.0
    for stage in STAGES:
        cfg = StageConfig(stage=stage, epochs=1, seed=seed,
                          kl_direction=kl_direction)
        stage_params = teacher if stage == "teacher_pretrain" else student
        stage_config = teacher_cfg if stage == "teacher_pretrain" else student_cfg
        result = gradient_check(
            stage, stage_params, stage_config, patches, feats, labels,
            None if stage in ("teacher_pretrain", "sft") else targets,
            cfg, n_coords, Rng(derive_seed(seed, f"gradcheck/{stage}")), h=h)
        results[stage] = result
        worst = max(worst, result["max_rel_err"])
    return {"stages": results, "max_rel_err": worst}
