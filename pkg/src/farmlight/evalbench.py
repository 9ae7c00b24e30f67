"""Benchmarks for a trained diagnosis model.

Three harnesses: closed-set accuracy (yes/no "is it diseased"), open-set
keyword F1 (symptom/treatment explanation), and a scripted multi-round
dialogue check against a live edge HTTP endpoint. Metrics are packaged as
an EvalReport with a canonical-JSON serialization.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import jsoncanon, synthgen
from . import model as model_mod
from .domain import ClassCatalog, ContractViolation, Observation
from .fusion import normalize_sensors, patchify
from .model import ModelConfig, ModelParams
from .rng import Rng, derive_seed
from .synthgen import VqaRecord


def keyword_f1(pred: Iterable[str], gold: Iterable[str]) -> float:
    """Set F1 over exact keyword matches.

    Both empty counts as a perfect (vacuous) answer; one empty scores zero.
    """
    pred, gold = set(pred), set(gold)
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    hits = len(pred & gold)
    if hits == 0:
        return 0.0
    precision = hits / len(pred)
    recall = hits / len(gold)
    return 2.0 * precision * recall / (precision + recall)


def predict_map(params: ModelParams, config: ModelConfig,
                observations: list[Observation]) -> dict:
    """Predicted class id per obs_id, one batched forward pass."""
    if not observations:
        return {}
    patches = np.stack([patchify(o.image) for o in observations])
    feats = np.array([normalize_sensors(o.sensors) for o in observations],
                     dtype=np.float64)
    predicted = model_mod.predict_batch(params, config, patches, feats)
    return {obs.obs_id: int(p) for obs, p in zip(observations, predicted)}


def _index_observations(observations: list[Observation],
                        records: list[VqaRecord]) -> dict:
    by_id = {o.obs_id: o for o in observations}
    missing = [r.obs_id for r in records if r.obs_id not in by_id]
    if missing:
        raise ContractViolation(
            f"records reference unknown observations: {missing[:3]}")
    return by_id


def eval_closed(params: ModelParams, config: ModelConfig,
                observations: list[Observation], records: list[VqaRecord],
                catalog: ClassCatalog) -> dict:
    """Yes/no accuracy plus the class-level confusion behind it.

    The model answers "yes" iff its predicted class is non-healthy; the
    confusion matrix is over the underlying K classes, rows = gold label.
    """
    closed = [r for r in records if r.kind == "closed"]
    if not closed:
        raise ContractViolation("no closed-set records to evaluate")
    by_id = _index_observations(observations, closed)
    refs = [by_id[r.obs_id] for r in closed]
    if any(o.label is None for o in refs):
        raise ContractViolation("closed-set evaluation needs labeled observations")
    preds = predict_map(params, config, refs)

    k = len(catalog)
    confusion = [[0] * k for _ in range(k)]
    matches = 0
    for record, obs in zip(closed, refs):
        predicted = preds[obs.obs_id]
        confusion[obs.label][predicted] += 1
        answer = "no" if catalog[predicted].is_healthy else "yes"
        if answer == record.gold_answer:
            matches += 1
    per_class = [
        (confusion[i][i] / sum(confusion[i])) if sum(confusion[i]) else 0.0
        for i in range(k)
    ]
    return {
        "closed_accuracy": matches / len(closed),
        "confusion": confusion,
        "per_class_accuracy": per_class,
        "n_closed": len(closed),
    }


def eval_open(params: ModelParams, config: ModelConfig,
              observations: list[Observation], records: list[VqaRecord],
              catalog: ClassCatalog) -> dict:
    """Mean keyword F1: predicted set = symptoms + treatment of the
    predicted class, gold set carried by the record."""
    opens = [r for r in records if r.kind == "open"]
    if not opens:
        raise ContractViolation("no open-set records to evaluate")
    by_id = _index_observations(observations, opens)
    refs = [by_id[r.obs_id] for r in opens]
    preds = predict_map(params, config, refs)

    scores = []
    for record, obs in zip(opens, refs):
        entry = catalog[preds[obs.obs_id]]
        predicted_set = set(entry.symptoms) | set(entry.treatment)
        scores.append(keyword_f1(predicted_set, set(record.gold_keywords)))
    return {"open_f1": sum(scores) / len(scores), "n_open": len(opens)}


@dataclass(frozen=True)
class EvalReport:
    closed_accuracy: float
    open_f1: float
    per_class_accuracy: list
    confusion: list
    n_samples: int
    model_version: str
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.closed_accuracy <= 1.0:
            raise ContractViolation("closed_accuracy outside [0,1]")
        if not 0.0 <= self.open_f1 <= 1.0:
            raise ContractViolation("open_f1 outside [0,1]")

    def classification_accuracy(self) -> float:
        """Trace over total of the confusion matrix."""
        total = sum(sum(row) for row in self.confusion)
        trace = sum(self.confusion[i][i] for i in range(len(self.confusion)))
        return trace / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "closed_accuracy": self.closed_accuracy,
            "open_f1": self.open_f1,
            "per_class_accuracy": list(self.per_class_accuracy),
            "confusion": [list(row) for row in self.confusion],
            "n_samples": self.n_samples,
            "model_version": self.model_version,
            "seed": self.seed,
        }

    def to_json(self) -> bytes:
        return jsoncanon.dumps_bytes(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(**data)


def evaluate(params: ModelParams, config: ModelConfig,
             observations: list[Observation], catalog: ClassCatalog,
             seed: int = 0, model_version: str = "") -> EvalReport:
    """Run both benchmark halves over generated question/answer pairs."""
    if not observations:
        raise ContractViolation("empty evaluation set")
    rng = Rng(derive_seed(seed, "evalbench/vqa"))
    records = synthgen.gen_vqa_pairs(observations, catalog, rng)
    closed = eval_closed(params, config, observations, records, catalog)
    opened = eval_open(params, config, observations, records, catalog)
    return EvalReport(
        closed_accuracy=closed["closed_accuracy"],
        open_f1=opened["open_f1"],
        per_class_accuracy=closed["per_class_accuracy"],
        confusion=closed["confusion"],
        n_samples=closed["n_closed"] + opened["n_open"],
        model_version=model_version,
        seed=seed,
    )


def evaluate_artifact(artifact: bytes | str | Path,
                      observations: list[Observation], catalog: ClassCatalog,
                      seed: int = 0) -> EvalReport:
    if isinstance(artifact, (str, Path)):
        artifact = Path(artifact).read_bytes()
    params, config, meta = model_mod.load(artifact)
    return evaluate(params, config, observations, catalog, seed=seed,
                    model_version=meta.get("version_id", ""))


# -- scripted dialogue against a live edge ---------------------------------

FOLLOW_UP_QUESTION = "What should I do about it?"


@dataclass
class DialogueResult:
    session: int
    obs_id: str
    checks: dict = field(default_factory=dict)
    rounds: list = field(default_factory=list)
    transport_failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.transport_failures and all(self.checks.values())


def _http_json(method: str, url: str, body: dict | None = None,
               timeout: float = 5.0) -> dict:
    data = jsoncanon.dumps_bytes(body) if body is not None else None
    request = urllib.request.Request(
        url, data=data, method=method,
        headers={"Content-Type": "application/json"} if data else {})
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return json.loads(response.read().decode("utf-8"))


def _wait_processed(base_url: str, obs_id: str, timeout: float = 5.0,
                    poll: float = 0.02) -> None:
    import time
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            _http_json("GET", f"{base_url}/v1/observations/{obs_id}")
            return
        except urllib.error.HTTPError as exc:
            if exc.code != 404:
                raise
        time.sleep(poll)
    raise TimeoutError(f"observation {obs_id} not processed within {timeout}s")


def eval_dialogue(base_url: str, n_sessions: int = 50, seed: int = 0,
                  timeout: float = 5.0) -> dict:
    """Replay scripted two-round diagnosis chats against a live edge.

    Each session posts one observation, asks for a diagnosis, then asks a
    follow-up bound to the same observation. Checks are structural: the
    answer names a catalog class, carries at least one treatment keyword
    (or the healthy template), and round two stays on the same obs_id.
    """
    base_url = base_url.rstrip("/")
    catalog, specs = synthgen.default_world()
    by_name = {catalog[i].name: catalog[i] for i in range(len(catalog))}
    results = []
    for session in range(n_sessions):
        rng = Rng(derive_seed(seed, f"dialogue/{session}"))
        # Mostly anomalies; a few healthy sessions keep the template honest.
        if session % 10 == 9:
            spec = specs[0]
        else:
            spec = specs[1 + rng.below(len(specs) - 1)]
        obs = synthgen.gen_observation(spec, rng)
        result = DialogueResult(session=session, obs_id=obs.obs_id)
        results.append(result)

        payload = obs.to_dict()
        payload.pop("label", None)  # the edge never sees gold labels
        try:
            _http_json("POST", f"{base_url}/v1/observations", payload,
                       timeout=timeout)
            _wait_processed(base_url, obs.obs_id, timeout=timeout)
            first = _http_json(
                "POST", f"{base_url}/v1/query",
                {"text": synthgen.OPEN_QUESTION, "obs_id": obs.obs_id},
                timeout=timeout)
            result.rounds.append(first)
        except (urllib.error.URLError, ConnectionError, TimeoutError,
                OSError) as exc:
            result.transport_failures.append({"round": 1, "error": str(exc)})
            continue

        entry = by_name.get(first.get("class_name", ""))
        answer = first.get("answer", "")
        result.checks["names_class"] = (
            entry is not None and entry.name in answer)
        if entry is not None and entry.is_healthy:
            result.checks["treatment_keyword"] = "No action required." in answer
        else:
            result.checks["treatment_keyword"] = (
                entry is not None
                and any(word in answer for word in entry.treatment))

        try:
            second = _http_json(
                "POST", f"{base_url}/v1/query",
                {"text": FOLLOW_UP_QUESTION, "obs_id": obs.obs_id},
                timeout=timeout)
            result.rounds.append(second)
        except (urllib.error.URLError, ConnectionError, TimeoutError,
                OSError) as exc:
            result.transport_failures.append({"round": 2, "error": str(exc)})
            continue
        result.checks["same_context"] = second.get("obs_id") == obs.obs_id

    passed = sum(1 for r in results if r.passed)
    return {
        "sessions": n_sessions,
        "passed": passed,
        "pass_rate": passed / n_sessions if n_sessions else 0.0,
        "transport_failures": sum(len(r.transport_failures) for r in results),
        "results": results,
    }
