"""Tiny multimodal network (visual encoder -> projector -> fusion head).

Teacher and student share the architecture at different widths. Parameters
are stored as float32 (what the artifact format serializes); all math runs
in float64. The visual encoder (w_enc, b_enc) is frozen in every training
stage, which trainers enforce structurally and reports verify by digest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jsoncanon
from .domain import FarmlightError, NumericFault, sha256
from .fusion import NUM_PATCHES, PATCH_DIM
from .rng import Rng

MAGIC = b"FLSM"
FORMAT_VERSION = 1
NORM_FLOOR = 1e-12


class FormatError(FarmlightError):
    """Artifact bytes do not follow the .flsm layout."""


class IntegrityError(FarmlightError):
    """Artifact digest does not match its contents."""


class TruncationError(FarmlightError):
    """Artifact bytes end before the declared layout is complete."""


@dataclass(frozen=True)
class ModelConfig:
    role: str                      # teacher | student
    d_v: int
    d_h: int
    hidden: int
    k: int = 8
    t: int = NUM_PATCHES
    temperature: float = 1.0

    def __post_init__(self):
        if min(self.d_v, self.d_h, self.hidden, self.k, self.t) < 1:
            raise FarmlightError("all model dimensions must be >= 1")
        if self.temperature <= 0.0:
            raise FarmlightError("temperature must be > 0")

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "d_v": self.d_v,
            "d_h": self.d_h,
            "hidden": self.hidden,
            "k": self.k,
            "t": self.t,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            role=d["role"], d_v=d["d_v"], d_h=d["d_h"], hidden=d["hidden"],
            k=d["k"], t=d["t"], temperature=d["temperature"],
        )


def teacher_config(temperature: float = 1.0) -> ModelConfig:
    return ModelConfig(role="teacher", d_v=64, d_h=48, hidden=64, temperature=temperature)


def student_config(temperature: float = 1.0) -> ModelConfig:
    return ModelConfig(role="student", d_v=32, d_h=24, hidden=32, temperature=temperature)


# Serialization order of the parameter tensors; also the init draw order.
PARAM_FIELDS = ("w_enc", "b_enc", "w_proj", "b_proj", "w_txt", "b_txt",
                "w_h1", "b_h1", "w_h2", "b_h2")
ENCODER_FIELDS = ("w_enc", "b_enc")


@dataclass
class ModelParams:
    w_enc: np.ndarray
    b_enc: np.ndarray
    w_proj: np.ndarray
    b_proj: np.ndarray
    w_txt: np.ndarray
    b_txt: np.ndarray
    w_h1: np.ndarray
    b_h1: np.ndarray
    w_h2: np.ndarray
    b_h2: np.ndarray

    def copy(self) -> "ModelParams":
        return ModelParams(**{f: getattr(self, f).copy() for f in PARAM_FIELDS})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(**{f: getattr(self, f).astype(dtype) for f in PARAM_FIELDS})


def param_shapes(config: ModelConfig) -> dict:
    return {
        "w_enc": (PATCH_DIM, config.d_v),
        "b_enc": (config.d_v,),
        "w_proj": (config.d_v, config.d_h),
        "b_proj": (config.d_h,),
        "w_txt": (4, config.d_h),
        "b_txt": (config.d_h,),
        "w_h1": (2 * config.d_h, config.hidden),
        "b_h1": (config.hidden,),
        "w_h2": (config.hidden, config.k),
        "b_h2": (config.k,),
    }


def init(config: ModelConfig, seed: int) -> ModelParams:
    """Xavier-uniform weights, zero biases, all drawn from one seeded stream."""
    rng = Rng(seed)
    shapes = param_shapes(config)
    tensors = {}
    for name in PARAM_FIELDS:
        shape = shapes[name]
        if len(shape) == 1:
            tensors[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in, fan_out = shape
        a = np.sqrt(6.0 / (fan_in + fan_out))
        flat = [rng.uniform(-a, a) for _ in range(fan_in * fan_out)]
        tensors[name] = np.array(flat, dtype=np.float64).reshape(shape).astype(np.float32)
    return ModelParams(**tensors)


@dataclass
class ForwardTrace:
    """Per-sample activations; batch dimension stripped."""
    z: np.ndarray        # [T, d_v]
    h: np.ndarray        # [T, d_h]
    p_vis: np.ndarray    # [T]
    a: np.ndarray        # [T, T]
    logits: np.ndarray   # [K]
    p_resp: np.ndarray   # [K]


@dataclass
class BatchTrace:
    """Batched activations plus the intermediates the backward pass needs."""
    patches: np.ndarray   # [B, T, 36]
    s: np.ndarray         # [B, 4]
    z: np.ndarray         # [B, T, d_v]
    h: np.ndarray         # [B, T, d_h]
    norms: np.ndarray     # [B, T]
    h_hat: np.ndarray     # [B, T, d_h]
    p_vis: np.ndarray     # [B, T]
    a: np.ndarray         # [B, T, T]
    t_feat: np.ndarray    # [B, d_h]
    c: np.ndarray         # [B, 2*d_h]
    relu_mask: np.ndarray  # [B, hidden]
    u: np.ndarray         # [B, hidden]
    logits: np.ndarray    # [B, K]
    p_resp: np.ndarray    # [B, K] at configured temperature
    p_resp_t1: np.ndarray  # [B, K] at temperature 1 (for cross-entropy)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericFault(f"non-finite values in tensor {name}")


def forward_batch(params: ModelParams, config: ModelConfig,
                  patches: np.ndarray, s: np.ndarray) -> BatchTrace:
    """Run the network on a [B, T, 36] patch batch and [B, 4] prompt features."""
    p = np.asarray(patches, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    w = params.astype(np.float64)

    z = np.tanh(p @ w.w_enc + w.b_enc)
    _check_finite("z", z)
    h = z @ w.w_proj + w.b_proj
    _check_finite("h", h)
    norms = np.linalg.norm(h, axis=-1)
    p_vis = softmax(norms, axis=-1)
    _check_finite("p_vis", p_vis)
    scale = np.maximum(norms, NORM_FLOOR)
    h_hat = h / scale[..., None]
    a = h_hat @ np.swapaxes(h_hat, -1, -2)
    _check_finite("a", a)

    pooled = h.mean(axis=1)
    t_feat = np.tanh(s @ w.w_txt + w.b_txt)
    c = np.concatenate([pooled, t_feat], axis=-1)
    upre = c @ w.w_h1 + w.b_h1
    relu_mask = (upre > 0).astype(np.float64)
    u = upre * relu_mask
    logits = u @ w.w_h2 + w.b_h2
    _check_finite("logits", logits)
    p_resp = softmax(logits / config.temperature, axis=-1)
    _check_finite("p_resp", p_resp)
    p_resp_t1 = p_resp if config.temperature == 1.0 else softmax(logits, axis=-1)

    return BatchTrace(
        patches=p, s=s, z=z, h=h, norms=norms, h_hat=h_hat, p_vis=p_vis, a=a,
        t_feat=t_feat, c=c, relu_mask=relu_mask, u=u, logits=logits,
        p_resp=p_resp, p_resp_t1=p_resp_t1,
    )


def forward(params: ModelParams, config: ModelConfig,
            patches: np.ndarray, s: np.ndarray) -> ForwardTrace:
    """Single-sample forward; thin wrapper over the batch path."""
    bt = forward_batch(params, config, np.asarray(patches)[None, ...],
                       np.asarray(s)[None, ...])
    return ForwardTrace(
        z=bt.z[0], h=bt.h[0], p_vis=bt.p_vis[0], a=bt.a[0],
        logits=bt.logits[0], p_resp=bt.p_resp[0],
    )


def predict_batch(params: ModelParams, config: ModelConfig,
                  patches: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Argmax class per sample (lowest index wins ties)."""
    bt = forward_batch(params, config, patches, s)
    return np.argmax(bt.p_resp, axis=-1)


def tensor_bytes(params: ModelParams) -> bytes:
    chunks = []
    for name in PARAM_FIELDS:
        chunks.append(np.ascontiguousarray(getattr(params, name), dtype="<f4").tobytes())
    return b"".join(chunks)


def compute_version_id(params: ModelParams, stage: str) -> str:
    return sha256(tensor_bytes(params) + stage.encode("utf-8"))[:8].hex()


def save(params: ModelParams, config: ModelConfig, meta: dict) -> bytes:
    """Serialize to the .flsm byte layout (see docs/model-format.md)."""
    meta_doc = dict(meta)
    meta_doc["config"] = config.to_dict()
    meta_json = jsoncanon.dumps_bytes(meta_doc)
    tensors = tensor_bytes(params)
    body = (
        MAGIC
        + bytes([FORMAT_VERSION])
        + len(meta_json).to_bytes(4, "big")
        + meta_json
        + len(tensors).to_bytes(4, "big")
        + tensors
    )
    return body + sha256(body)


def load(data: bytes) -> tuple[ModelParams, ModelConfig, dict]:
    """Parse .flsm bytes; verifies magic, version and digest before tensors."""
    if len(data) < 4:
        raise TruncationError("artifact shorter than magic")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    if len(data) < 5:
        raise TruncationError("artifact missing format version")
    if data[4] != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {data[4]}")
    if len(data) < 9:
        raise TruncationError("artifact missing metadata length")
    meta_len = int.from_bytes(data[5:9], "big")
    if len(data) < 9 + meta_len + 4:
        raise TruncationError("artifact truncated inside metadata")
    tensors_off = 9 + meta_len + 4
    tensor_len = int.from_bytes(data[9 + meta_len:tensors_off], "big")
    expected_total = tensors_off + tensor_len + 32
    if len(data) < expected_total:
        raise TruncationError(
            f"artifact truncated: expected {expected_total} bytes, got {len(data)}"
        )
    if len(data) > expected_total:
        raise FormatError("artifact has trailing bytes beyond declared layout")
    body, trailer = data[:-32], data[-32:]
    if sha256(body) != trailer:
        raise IntegrityError("artifact digest mismatch")

    try:
        meta_doc = jsoncanon.loads(data[9:9 + meta_len])
        config = ModelConfig.from_dict(meta_doc.pop("config"))
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad artifact metadata: {exc}") from exc

    shapes = param_shapes(config)
    expected_tensor_len = sum(
        4 * int(np.prod(shape)) for shape in shapes.values()
    )
    if tensor_len != expected_tensor_len:
        raise FormatError(
            f"tensor payload is {tensor_len} bytes, config implies {expected_tensor_len}"
        )
    raw = data[tensors_off:tensors_off + tensor_len]
    offset = 0
    tensors = {}
    for name in PARAM_FIELDS:
        shape = shapes[name]
        nbytes = 4 * int(np.prod(shape))
        arr = np.frombuffer(raw[offset:offset + nbytes], dtype="<f4").reshape(shape)
        tensors[name] = arr.astype(np.float32).copy()
        offset += nbytes
    return ModelParams(**tensors), config, meta_doc


def encoder_digest(params: ModelParams) -> str:
    """SHA-256 over the frozen visual-encoder tensors."""
    data = b"".join(
        np.ascontiguousarray(getattr(params, f), dtype="<f4").tobytes()
        for f in ENCODER_FIELDS
    )
    return sha256(data).hex()


def tensor_digest(params: ModelParams, names: tuple) -> str:
    data = b"".join(
        np.ascontiguousarray(getattr(params, f), dtype="<f4").tobytes() for f in names
    )
    return sha256(data).hex()
