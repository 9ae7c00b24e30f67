"""Sensor-to-prompt conversion and image patchification.

The numeric sensor modality is carried twice: as a human-readable prompt
string (for the chat API and dashboard) and as a fixed-range normalized
feature vector (what the model actually consumes). Ranges are fixed, not
dataset statistics, so edge and cloud featurize identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import IMAGE_SIZE, ContractViolation, PatchImage, SensorReading

# (lo, hi) per sensor field: ph, temperature_c, humidity_pct, light_klux.
FIELD_RANGES = ((3.0, 9.0), (-10.0, 50.0), (0.0, 100.0), (0.0, 120.0))

PATCH_SIZE = 6
PATCH_GRID = IMAGE_SIZE // PATCH_SIZE          # 4x4 grid
NUM_PATCHES = PATCH_GRID * PATCH_GRID          # 16 tokens
PATCH_DIM = PATCH_SIZE * PATCH_SIZE            # 36 values per token

PROMPT_TEMPLATE = (
    "Current sensor data: pH={ph:.1f}, temperature={temp:.1f}°C, "
    "humidity={hum:.1f}%, light={light:.1f}klx. "
    "Analyze whether the crops in this image exhibit abnormalities."
)


@dataclass(frozen=True)
class Prompt:
    text: str
    features: tuple  # 4 sensor values normalized into [0,1]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(f) for f in self.features))
        if any(not 0.0 <= f <= 1.0 for f in self.features):
            raise ContractViolation("prompt features must lie in [0,1]")


def normalize_sensors(sensors: SensorReading) -> tuple:
    values = (sensors.ph, sensors.temperature_c, sensors.humidity_pct, sensors.light_klux)
    out = []
    for v, (lo, hi) in zip(values, FIELD_RANGES):
        f = (v - lo) / (hi - lo)
        out.append(0.0 if f < 0.0 else 1.0 if f > 1.0 else f)
    return tuple(out)


def build_prompt(sensors: SensorReading) -> Prompt:
    text = PROMPT_TEMPLATE.format(
        ph=sensors.ph,
        temp=sensors.temperature_c,
        hum=sensors.humidity_pct,
        light=sensors.light_klux,
    )
    return Prompt(text=text, features=normalize_sensors(sensors))


def patchify(image: PatchImage) -> np.ndarray:
    """24x24 image -> [16, 36] patch matrix, row-major in both orders."""
    grid = np.asarray(image.pixels, dtype=np.float64).reshape(IMAGE_SIZE, IMAGE_SIZE)
    patches = np.empty((NUM_PATCHES, PATCH_DIM), dtype=np.float64)
    for gy in range(PATCH_GRID):
        for gx in range(PATCH_GRID):
            block = grid[gy * PATCH_SIZE:(gy + 1) * PATCH_SIZE,
                         gx * PATCH_SIZE:(gx + 1) * PATCH_SIZE]
            patches[gy * PATCH_GRID + gx] = block.reshape(-1)
    return patches


def unpatchify(patches: np.ndarray) -> PatchImage:
    """Inverse of :func:`patchify`; exact partition round-trip."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape != (NUM_PATCHES, PATCH_DIM):
        raise ContractViolation(f"expected shape ({NUM_PATCHES},{PATCH_DIM}), got {patches.shape}")
    grid = np.empty((IMAGE_SIZE, IMAGE_SIZE), dtype=np.float64)
    for gy in range(PATCH_GRID):
        for gx in range(PATCH_GRID):
            block = patches[gy * PATCH_GRID + gx].reshape(PATCH_SIZE, PATCH_SIZE)
            grid[gy * PATCH_SIZE:(gy + 1) * PATCH_SIZE,
                 gx * PATCH_SIZE:(gx + 1) * PATCH_SIZE] = block
    return PatchImage(pixels=[float(p) for p in grid.reshape(-1)])
