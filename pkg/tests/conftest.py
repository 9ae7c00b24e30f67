"""Shared fixtures: the default world and one session-scoped trained pipeline.

Training runs once per session (seconds, not minutes) and every suite that
needs real artifacts reuses the same output directory.
"""

from __future__ import annotations

import time

import pytest

from farmlight import distill, synthgen
from farmlight.rng import Rng, derive_seed

PIPELINE_SEED = 0
TRAIN_PER_CLASS = 250
EVAL_PER_CLASS = 50


@pytest.fixture(scope="session")
def world():
    return synthgen.default_world()


def _make_split(specs, per_class: int, seed: int, split: str) -> list:
    rng = Rng(derive_seed(seed, f"dataset/{split}"))
    observations = []
    for spec in specs:
        for _ in range(per_class):
            observations.append(synthgen.gen_observation(spec, rng))
    rng.shuffle(observations)
    return observations


@pytest.fixture(scope="session")
def datasets(world):
    _catalog, specs = world
    return {
        "train": _make_split(specs, TRAIN_PER_CLASS, PIPELINE_SEED, "train"),
        "val": _make_split(specs, EVAL_PER_CLASS, PIPELINE_SEED, "val"),
        "test": _make_split(specs, EVAL_PER_CLASS, PIPELINE_SEED, "test"),
    }


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory, world, datasets):
    """Full teacher+student pipeline, trained once and shared."""
    catalog, _specs = world
    out_dir = tmp_path_factory.mktemp("artifacts")
    started = time.monotonic()
    result = distill.run_pipeline(
        datasets["train"], datasets["val"], catalog, out_dir, PIPELINE_SEED)
    result["wall_secs"] = time.monotonic() - started
    result["out_dir"] = out_dir
    result["seed"] = PIPELINE_SEED
    return result
