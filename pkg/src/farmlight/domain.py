"""Shared domain types and deterministic utilities.

All types are immutable after construction, validate their invariants in
``__post_init__``, and round-trip byte-identically through canonical JSON
(see :mod:`farmlight.jsoncanon`).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from . import jsoncanon

IMAGE_SIZE = 24
NUM_CLASSES = 8


class FarmlightError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(FarmlightError):
    """An operation was called with inputs that violate its contract."""


class NumericFault(FarmlightError):
    """A computation produced a non-finite value; message names the tensor."""


class NotReadyError(FarmlightError):
    """The runtime cannot serve the request yet (e.g. no model loaded)."""


class BackpressureError(FarmlightError):
    """A bounded queue is full; the producer must retry or slow down."""


def sha256(data: bytes) -> bytes:
    """FIPS 180-4 SHA-256 digest (32 bytes)."""
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class SensorReading:
    ph: float
    temperature_c: float
    humidity_pct: float
    light_klux: float
    timestamp_ms: int
    sensor_id: str

    def __post_init__(self):
        object.__setattr__(self, "ph", float(self.ph))
        object.__setattr__(self, "temperature_c", float(self.temperature_c))
        object.__setattr__(self, "humidity_pct", float(self.humidity_pct))
        object.__setattr__(self, "light_klux", float(self.light_klux))
        object.__setattr__(self, "timestamp_ms", int(self.timestamp_ms))
        if not 0.0 <= self.humidity_pct <= 100.0:
            raise ContractViolation(f"humidity_pct out of [0,100]: {self.humidity_pct}")
        if self.light_klux < 0.0:
            raise ContractViolation(f"light_klux negative: {self.light_klux}")
        if self.timestamp_ms < 0:
            raise ContractViolation(f"timestamp_ms negative: {self.timestamp_ms}")

    def to_dict(self) -> dict:
        return {
            "ph": self.ph,
            "temperature_c": self.temperature_c,
            "humidity_pct": self.humidity_pct,
            "light_klux": self.light_klux,
            "timestamp_ms": self.timestamp_ms,
            "sensor_id": self.sensor_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorReading":
        return cls(
            ph=d["ph"],
            temperature_c=d["temperature_c"],
            humidity_pct=d["humidity_pct"],
            light_klux=d["light_klux"],
            timestamp_ms=d["timestamp_ms"],
            sensor_id=d["sensor_id"],
        )


@dataclass(frozen=True)
class PatchImage:
    pixels: tuple
    width: int = IMAGE_SIZE
    height: int = IMAGE_SIZE

    def __post_init__(self):
        object.__setattr__(self, "pixels", tuple(float(p) for p in self.pixels))
        if len(self.pixels) != self.width * self.height:
            raise ContractViolation(
                f"pixel count {len(self.pixels)} != {self.width}x{self.height}"
            )
        for p in self.pixels:
            if not 0.0 <= p <= 1.0:
                raise ContractViolation(f"pixel out of [0,1]: {p}")

    def pixel(self, x: int, y: int) -> float:
        return self.pixels[y * self.width + x]

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "pixels": list(self.pixels)}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchImage":
        return cls(pixels=d["pixels"], width=d["width"], height=d["height"])


@dataclass(frozen=True)
class Observation:
    obs_id: str
    image: PatchImage
    sensors: SensorReading
    location: tuple
    label: int | None = None

    def __post_init__(self):
        lat, lon = self.location
        object.__setattr__(self, "location", (float(lat), float(lon)))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    def to_dict(self) -> dict:
        return {
            "obs_id": self.obs_id,
            "image": self.image.to_dict(),
            "sensors": self.sensors.to_dict(),
            "location": {"lat": self.location[0], "lon": self.location[1]},
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(
            obs_id=d["obs_id"],
            image=PatchImage.from_dict(d["image"]),
            sensors=SensorReading.from_dict(d["sensors"]),
            location=(d["location"]["lat"], d["location"]["lon"]),
            label=d.get("label"),
        )

    def to_json(self) -> bytes:
        return jsoncanon.dumps_bytes(self.to_dict())

    @classmethod
    def from_json(cls, data: bytes | str) -> "Observation":
        return cls.from_dict(jsoncanon.loads(data))


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    is_healthy: bool
    symptoms: tuple
    treatment: tuple
    urgency: str  # low | medium | high

    def __post_init__(self):
        object.__setattr__(self, "symptoms", tuple(self.symptoms))
        object.__setattr__(self, "treatment", tuple(self.treatment))
        if self.urgency not in ("low", "medium", "high"):
            raise ContractViolation(f"bad urgency: {self.urgency}")

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "name": self.name,
            "is_healthy": self.is_healthy,
            "symptoms": list(self.symptoms),
            "treatment": list(self.treatment),
            "urgency": self.urgency,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassEntry":
        return cls(
            class_id=d["class_id"],
            name=d["name"],
            is_healthy=d["is_healthy"],
            symptoms=d["symptoms"],
            treatment=d["treatment"],
            urgency=d["urgency"],
        )


@dataclass(frozen=True)
class ClassCatalog:
    classes: tuple

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        ids = [c.class_id for c in self.classes]
        if ids != list(range(len(self.classes))):
            raise ContractViolation(f"class_id values must be exactly 0..K-1, got {ids}")
        healthy = [c for c in self.classes if c.is_healthy]
        if len(healthy) != 1 or healthy[0].class_id != 0:
            raise ContractViolation("exactly one class must be healthy and it must be class 0")
        for c in self.classes:
            if not c.is_healthy and (len(c.symptoms) < 2 or len(c.treatment) < 2):
                raise ContractViolation(
                    f"class {c.name} needs >=2 symptom and >=2 treatment keywords"
                )

    def __len__(self) -> int:
        return len(self.classes)

    def __getitem__(self, class_id: int) -> ClassEntry:
        return self.classes[class_id]

    def to_dict(self) -> dict:
        return {"classes": [c.to_dict() for c in self.classes]}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassCatalog":
        return cls(classes=[ClassEntry.from_dict(c) for c in d["classes"]])

    def digest_hex(self) -> str:
        return sha256_hex(jsoncanon.dumps_bytes(self.to_dict()))


@dataclass(frozen=True)
class Diagnosis:
    obs_id: str
    probs: tuple
    predicted: int = field(default=-1)
    confidence: float = field(default=-1.0)
    recommendation: str = ""
    model_version: str = ""

    def __post_init__(self):
        probs = [float(p) for p in self.probs]
        if any(p < 0.0 for p in probs):
            raise ContractViolation("probability entries must be >= 0")
        total = sum(probs)
        if total <= 0.0:
            raise ContractViolation("probability vector sums to <= 0")
        # Renormalize only when needed, so an already-normalized vector is
        # stored bit-for-bit (construction is idempotent).
        if abs(total - 1.0) > 1e-9:
            probs = [p / total for p in probs]
        predicted = max(range(len(probs)), key=lambda i: (probs[i], -i))
        object.__setattr__(self, "probs", tuple(probs))
        object.__setattr__(self, "predicted", predicted)
        object.__setattr__(self, "confidence", probs[predicted])

    def to_dict(self) -> dict:
        return {
            "obs_id": self.obs_id,
            "probs": list(self.probs),
            "predicted": self.predicted,
            "confidence": self.confidence,
            "recommendation": self.recommendation,
            "model_version": self.model_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Diagnosis":
        return cls(
            obs_id=d["obs_id"],
            probs=d["probs"],
            recommendation=d["recommendation"],
            model_version=d["model_version"],
        )
