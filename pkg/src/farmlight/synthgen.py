"""Deterministic synthetic farm-world generator.

Produces labeled multimodal datasets (sinusoidal leaf textures + Gaussian
sensor profiles) whose classes are separable by a closed-form
nearest-centroid oracle. The oracle doubles as a standing canary: if it
drops below 0.99 accuracy, the world parameters are broken, not the model.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from pathlib import Path

from . import fusion, jsoncanon
from .domain import (
    IMAGE_SIZE,
    ClassCatalog,
    ClassEntry,
    ContractViolation,
    FarmlightError,
    Observation,
    PatchImage,
    SensorReading,
    sha256_hex,
)
from .rng import Rng, derive_seed

DEFLATE_LEVEL = 6
# Weight applied to the mean squared pixel deviation so texture energy is
# commensurate with the [0,1]-normalized sensor features.
ENERGY_SCALE = 8.0

SENSOR_FIELDS = ("ph", "temperature_c", "humidity_pct", "light_klux")


class DatasetIOError(FarmlightError):
    """Dataset file could not be written or read; message carries the path."""


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    texture_freq: float
    texture_angle: float
    texture_amp: float
    sensor_mean: tuple
    sensor_std: tuple
    pixel_noise: float

    def __post_init__(self):
        if not 0.0 <= self.texture_amp <= 0.45:
            raise ContractViolation(f"texture_amp out of [0,0.45]: {self.texture_amp}")
        if self.pixel_noise < 0.0:
            raise ContractViolation("pixel_noise must be >= 0")
        if any(s <= 0.0 for s in self.sensor_std):
            raise ContractViolation("sensor_std entries must be > 0")
        object.__setattr__(self, "sensor_mean", tuple(float(m) for m in self.sensor_mean))
        object.__setattr__(self, "sensor_std", tuple(float(s) for s in self.sensor_std))


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    seed: int
    split: str
    catalog_digest: str
    counts: tuple  # per-class record counts, index = class_id
    n_records: int
    file_sha256: str

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if sum(self.counts) != self.n_records:
            raise ContractViolation("manifest counts do not sum to n_records")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "split": self.split,
            "catalog_digest": self.catalog_digest,
            "counts": list(self.counts),
            "n_records": self.n_records,
            "file_sha256": self.file_sha256,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            name=d["name"],
            seed=d["seed"],
            split=d["split"],
            catalog_digest=d["catalog_digest"],
            counts=d["counts"],
            n_records=d["n_records"],
            file_sha256=d["file_sha256"],
        )


_CATALOG_ROWS = [
    (0, "healthy", True, (), (), "low"),
    (1, "leaf_rust", False,
     ("orange pustules", "leaf speckling"),
     ("apply fungicide", "remove infected leaves"), "medium"),
    (2, "powdery_mildew", False,
     ("white powder coating", "curled leaves"),
     ("improve air circulation", "apply sulfur spray"), "low"),
    (3, "root_rot", False,
     ("wilting despite moisture", "blackened roots"),
     ("reduce irrigation", "improve drainage"), "high"),
    (4, "aphid_infestation", False,
     ("sticky honeydew", "clustered green insects"),
     ("release ladybugs", "apply insecticidal soap"), "medium"),
    (5, "spider_mites", False,
     ("fine webbing", "stippled yellow leaves"),
     ("increase humidity", "apply miticide"), "medium"),
    (6, "nitrogen_deficiency", False,
     ("pale yellow older leaves", "stunted growth"),
     ("apply nitrogen fertilizer", "add compost"), "low"),
    (7, "late_blight", False,
     ("brown lesions", "white mold margins"),
     ("destroy infected plants", "apply copper fungicide"), "high"),
]

# Per-class sensor profile centers (ph, temperature_c, humidity_pct, light_klux),
# spread so that classes are well separated in sensor space alone.
_SENSOR_MEANS = [
    (6.5, 22.0, 55.0, 60.0),
    (4.0, 15.0, 30.0, 30.0),
    (4.8, 30.0, 80.0, 90.0),
    (5.6, 10.0, 65.0, 20.0),
    (6.4, 35.0, 25.0, 100.0),
    (7.2, 18.0, 90.0, 45.0),
    (8.0, 28.0, 40.0, 75.0),
    (8.6, 12.0, 70.0, 15.0),
]
_SENSOR_STD = (0.15, 1.5, 4.0, 5.0)
_TEXTURE_FREQS = [0.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
_TEXTURE_AMP = 0.35
_PIXEL_NOISE = 0.05


def default_world() -> tuple[ClassCatalog, list[ClassSpec]]:
    """The fixed built-in world: 8 classes with pairwise-distinct textures."""
    catalog = ClassCatalog(
        classes=[ClassEntry(*row) for row in _CATALOG_ROWS]
    )
    specs = []
    for k in range(len(_CATALOG_ROWS)):
        specs.append(
            ClassSpec(
                class_id=k,
                texture_freq=_TEXTURE_FREQS[k],
                texture_angle=k * math.pi / 8.0,
                texture_amp=0.0 if k == 0 else _TEXTURE_AMP,
                sensor_mean=_SENSOR_MEANS[k],
                sensor_std=_SENSOR_STD,
                pixel_noise=_PIXEL_NOISE,
            )
        )
    return catalog, specs


_texture_cache: dict = {}


def _texture_base(spec: ClassSpec) -> list:
    """576-entry noiseless texture for a spec, cached (rng-independent)."""
    key = (spec.texture_freq, spec.texture_angle, spec.texture_amp)
    cached = _texture_cache.get(key)
    if cached is not None:
        return cached
    freq, angle, amp = key
    cos_a, sin_a = math.cos(angle), math.sin(angle)
    base = []
    for y in range(IMAGE_SIZE):
        for x in range(IMAGE_SIZE):
            phase = 2.0 * math.pi * freq * (x * cos_a + y * sin_a) / IMAGE_SIZE
            base.append(0.5 + amp * math.sin(phase))
    _texture_cache[key] = base
    return base


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def gen_observation(spec: ClassSpec, rng: Rng) -> Observation:
    """One labeled observation; draw order is pinned for reproducibility."""
    base = _texture_base(spec)
    if spec.pixel_noise > 0.0:
        pixels = [_clamp(b + rng.normal(0.0, spec.pixel_noise), 0.0, 1.0) for b in base]
    else:
        pixels = [_clamp(b, 0.0, 1.0) for b in base]
    values = []
    for mean, std, (lo, hi) in zip(spec.sensor_mean, spec.sensor_std, fusion.FIELD_RANGES):
        values.append(_clamp(rng.normal(mean, std), lo, hi))
    sensors = SensorReading(
        ph=values[0],
        temperature_c=values[1],
        humidity_pct=values[2],
        light_klux=values[3],
        timestamp_ms=1_735_689_600_000 + rng.below(31_536_000_000),
        sensor_id=f"probe-{rng.below(100):02d}",
    )
    location = (rng.uniform(44.0, 44.5), rng.uniform(-91.5, -91.0))
    return Observation(
        obs_id=rng.uuid4(),
        image=PatchImage(pixels=pixels),
        sensors=sensors,
        location=location,
        label=spec.class_id,
    )


def gen_dataset(
    world: tuple[ClassCatalog, list[ClassSpec]],
    counts: list[int],
    seed: int,
    split: str,
    out_dir: str | Path,
) -> tuple[Path, DatasetManifest]:
    """Write a stratified ``<split>.ndjson.z`` dataset plus its manifest.

    Train/val/test use disjoint RNG substreams derived from (seed, split),
    so records never collide across splits.
    """
    catalog, specs = world
    if len(counts) != len(specs):
        raise ContractViolation(f"need {len(specs)} class counts, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise ContractViolation("counts must be >= 0")
    rng = Rng(derive_seed(seed, f"dataset/{split}"))
    records = []
    for spec, count in zip(specs, counts):
        for _ in range(count):
            records.append(gen_observation(spec, rng))
    rng.shuffle(records)

    lines = bytearray()
    for obs in records:
        lines.extend(obs.to_json())
        lines.extend(b"\n")
    compressor = zlib.compressobj(DEFLATE_LEVEL, zlib.DEFLATED, -15)
    payload = compressor.compress(bytes(lines)) + compressor.flush()

    out_dir = Path(out_dir)
    file_path = out_dir / f"{split}.ndjson.z"
    manifest = DatasetManifest(
        name=f"{split}.ndjson.z",
        seed=seed,
        split=split,
        catalog_digest=catalog.digest_hex(),
        counts=counts,
        n_records=len(records),
        file_sha256=sha256_hex(payload),
    )
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        file_path.write_bytes(payload)
        (out_dir / f"{split}.manifest.json").write_bytes(
            jsoncanon.dumps_bytes(manifest.to_dict())
        )
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset at {file_path}: {exc}") from exc
    return file_path, manifest


def load_dataset(path: str | Path, verify_manifest: bool = True) -> list[Observation]:
    """Read a ``.ndjson.z`` dataset; verifies the sibling manifest digest."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset at {path}: {exc}") from exc
    manifest_path = path.with_name(path.name.replace(".ndjson.z", ".manifest.json"))
    if verify_manifest and manifest_path.exists():
        manifest = DatasetManifest.from_dict(jsoncanon.loads(manifest_path.read_bytes()))
        actual = sha256_hex(payload)
        if actual != manifest.file_sha256:
            raise DatasetIOError(
                f"digest mismatch for {path}: manifest {manifest.file_sha256}, file {actual}"
            )
    raw = zlib.decompress(payload, -15)
    observations = []
    for line in raw.splitlines():
        if line:
            observations.append(Observation.from_json(line))
    ids = [o.obs_id for o in observations]
    if len(set(ids)) != len(ids):
        raise DatasetIOError(f"duplicate obs_id in dataset {path}")
    return observations


CLOSED_QUESTION = "Is the crop in this image diseased?"
OPEN_QUESTION = "Describe the symptoms and recommend a treatment."


@dataclass(frozen=True)
class VqaRecord:
    obs_id: str
    kind: str  # closed | open
    question: str
    gold_answer: str = ""          # closed: yes | no
    gold_keywords: tuple = ()      # open: symptoms + treatment keyword set

    def to_dict(self) -> dict:
        return {
            "obs_id": self.obs_id,
            "kind": self.kind,
            "question": self.question,
            "gold_answer": self.gold_answer,
            "gold_keywords": sorted(self.gold_keywords),
        }


def gen_vqa_pairs(
    observations: list[Observation], catalog: ClassCatalog, rng: Rng | None = None
) -> list[VqaRecord]:
    """Two VQA records per labeled observation: one closed-set, one open-set."""
    records = []
    for obs in observations:
        if obs.label is None:
            raise ContractViolation(f"observation {obs.obs_id} is unlabeled")
        entry = catalog[obs.label]
        records.append(
            VqaRecord(
                obs_id=obs.obs_id,
                kind="closed",
                question=CLOSED_QUESTION,
                gold_answer="no" if entry.is_healthy else "yes",
            )
        )
        records.append(
            VqaRecord(
                obs_id=obs.obs_id,
                kind="open",
                question=OPEN_QUESTION,
                gold_keywords=tuple(sorted(set(entry.symptoms) | set(entry.treatment))),
            )
        )
    if rng is not None:
        rng.shuffle(records)
    return records


def observation_features(obs: Observation) -> list:
    """Oracle feature vector: scaled texture energy + normalized sensors."""
    energy = 0.0
    for p in obs.image.pixels:
        d = p - 0.5
        energy += d * d
    energy = ENERGY_SCALE * energy / len(obs.image.pixels)
    return [energy] + list(fusion.normalize_sensors(obs.sensors))


def fit_centroids(observations: list[Observation], num_classes: int) -> list:
    """Per-class mean feature vectors from a labeled (train) split."""
    sums = [[0.0] * 5 for _ in range(num_classes)]
    counts = [0] * num_classes
    for obs in observations:
        if obs.label is None:
            raise ContractViolation("centroid fitting needs labeled observations")
        f = observation_features(obs)
        for i, v in enumerate(f):
            sums[obs.label][i] += v
        counts[obs.label] += 1
    centroids = []
    for k in range(num_classes):
        if counts[k] == 0:
            raise ContractViolation(f"no training samples for class {k}")
        centroids.append([s / counts[k] for s in sums[k]])
    return centroids


def centroid_predict(centroids: list, obs: Observation) -> int:
    """Nearest centroid by Euclidean distance; lowest class index wins ties."""
    f = observation_features(obs)
    best_k, best_d = 0, math.inf
    for k, c in enumerate(centroids):
        d = sum((a - b) ** 2 for a, b in zip(f, c))
        if d < best_d:
            best_k, best_d = k, d
    return best_k


def centroid_accuracy(centroids: list, observations: list[Observation]) -> float:
    hits = sum(1 for o in observations if centroid_predict(centroids, o) == o.label)
    return hits / len(observations)
