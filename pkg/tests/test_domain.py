"""Domain type invariants and JSON round-trips."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from farmlight.domain import (
    IMAGE_SIZE,
    BackpressureError,
    ClassCatalog,
    ClassEntry,
    ContractViolation,
    Diagnosis,
    FarmlightError,
    NotReadyError,
    NumericFault,
    Observation,
    PatchImage,
    SensorReading,
    sha256_hex,
)


def make_sensors(**overrides):
    base = dict(ph=6.5, temperature_c=21.0, humidity_pct=55.0,
                light_klux=60.0, timestamp_ms=1_700_000_000_000,
                sensor_id="probe-01")
    base.update(overrides)
    return SensorReading(**base)


def make_observation(label=3):
    pixels = [0.5] * (IMAGE_SIZE * IMAGE_SIZE)
    return Observation(
        obs_id="11111111-2222-4333-8444-555555555555",
        image=PatchImage(pixels=pixels),
        sensors=make_sensors(),
        location=(44.1, -91.2),
        label=label,
    )


def test_error_hierarchy():
    for err in (ContractViolation, NumericFault, NotReadyError, BackpressureError):
        assert issubclass(err, FarmlightError)
    assert issubclass(FarmlightError, Exception)


def test_sensor_reading_validation():
    with pytest.raises(ContractViolation):
        make_sensors(humidity_pct=101.0)
    with pytest.raises(ContractViolation):
        make_sensors(humidity_pct=-0.1)
    with pytest.raises(ContractViolation):
        make_sensors(light_klux=-1.0)
    with pytest.raises(ContractViolation):
        make_sensors(timestamp_ms=-5)


def test_sensor_reading_round_trip():
    s = make_sensors()
    assert SensorReading.from_dict(s.to_dict()) == s


def test_patch_image_shape_and_bounds():
    with pytest.raises(ContractViolation):
        PatchImage(pixels=[0.5] * 10)
    with pytest.raises(ContractViolation):
        PatchImage(pixels=[1.5] + [0.5] * (IMAGE_SIZE * IMAGE_SIZE - 1))
    img = PatchImage(pixels=[0.25] * (IMAGE_SIZE * IMAGE_SIZE))
    assert img.pixel(3, 2) == 0.25
    assert PatchImage.from_dict(img.to_dict()) == img


def test_patch_image_pixel_addressing():
    pixels = [i / 575.0 for i in range(IMAGE_SIZE * IMAGE_SIZE)]
    img = PatchImage(pixels=pixels)
    # row-major: pixel(x, y) = pixels[y*width + x]
    assert img.pixel(0, 1) == pixels[IMAGE_SIZE]
    assert img.pixel(5, 0) == pixels[5]


def test_observation_json_round_trip():
    obs = make_observation()
    again = Observation.from_json(obs.to_json())
    assert again == obs
    assert again.to_json() == obs.to_json()


def test_observation_location_serialized_as_named_fields():
    doc = make_observation().to_dict()
    assert doc["location"] == {"lat": 44.1, "lon": -91.2}


def test_observation_unlabeled():
    obs = make_observation(label=None)
    assert obs.label is None
    assert Observation.from_json(obs.to_json()).label is None


def make_catalog():
    rows = [ClassEntry(0, "healthy", True, (), (), "low")]
    for i in range(1, 4):
        rows.append(ClassEntry(i, f"disease_{i}", False,
                               (f"symptom_{i}a", f"symptom_{i}b"),
                               (f"treat_{i}a", f"treat_{i}b"), "medium"))
    return ClassCatalog(classes=rows)


def test_class_entry_urgency_validated():
    with pytest.raises(ContractViolation):
        ClassEntry(1, "x", False, ("a", "b"), ("c", "d"), "urgent")


def test_catalog_requires_contiguous_ids():
    rows = [ClassEntry(0, "healthy", True, (), (), "low"),
            ClassEntry(2, "x", False, ("a", "b"), ("c", "d"), "low")]
    with pytest.raises(ContractViolation):
        ClassCatalog(classes=rows)


def test_catalog_requires_single_healthy_class_zero():
    rows = [ClassEntry(0, "a", False, ("s1", "s2"), ("t1", "t2"), "low"),
            ClassEntry(1, "b", True, (), (), "low")]
    with pytest.raises(ContractViolation):
        ClassCatalog(classes=rows)


def test_catalog_requires_keyword_minimums():
    rows = [ClassEntry(0, "healthy", True, (), (), "low"),
            ClassEntry(1, "thin", False, ("only",), ("t1", "t2"), "low")]
    with pytest.raises(ContractViolation):
        ClassCatalog(classes=rows)


def test_catalog_lookup_and_len():
    catalog = make_catalog()
    assert len(catalog) == 4
    assert catalog[2].name == "disease_2"


def test_catalog_digest_stable_and_content_sensitive():
    a, b = make_catalog(), make_catalog()
    assert a.digest_hex() == b.digest_hex()
    assert len(a.digest_hex()) == 64
    other = ClassCatalog(classes=list(make_catalog().classes[:3]))
    assert other.digest_hex() != a.digest_hex()
    assert ClassCatalog.from_dict(a.to_dict()).digest_hex() == a.digest_hex()


def test_diagnosis_derives_argmax_and_confidence():
    d = Diagnosis(obs_id="o", probs=(0.1, 0.7, 0.2))
    assert d.predicted == 1
    assert d.confidence == pytest.approx(0.7)


def test_diagnosis_tie_breaks_to_lowest_index():
    d = Diagnosis(obs_id="o", probs=(0.4, 0.4, 0.2))
    assert d.predicted == 0


def test_diagnosis_normalizes_unnormalized_vectors():
    d = Diagnosis(obs_id="o", probs=(2.0, 6.0))
    assert d.probs == pytest.approx((0.25, 0.75))
    assert d.confidence == pytest.approx(0.75)


def test_diagnosis_construction_idempotent_on_normalized_input():
    d = Diagnosis(obs_id="o", probs=(0.25, 0.75))
    assert d.probs == (0.25, 0.75)


def test_diagnosis_rejects_bad_vectors():
    with pytest.raises(ContractViolation):
        Diagnosis(obs_id="o", probs=(-0.1, 1.1))
    with pytest.raises(ContractViolation):
        Diagnosis(obs_id="o", probs=(0.0, 0.0))


def test_diagnosis_round_trip():
    d = Diagnosis(obs_id="o", probs=(0.1, 0.9), recommendation="water less",
                  model_version="abc123")
    assert Diagnosis.from_dict(d.to_dict()) == d


@given(st.lists(st.floats(min_value=0.001, max_value=10.0),
                min_size=2, max_size=8))
@settings(max_examples=100)
def test_diagnosis_probs_always_normalized(raw):
    d = Diagnosis(obs_id="o", probs=tuple(raw))
    assert sum(d.probs) == pytest.approx(1.0, abs=1e-9)
    assert max(d.probs) == pytest.approx(d.confidence)
    assert d.probs[d.predicted] == d.confidence


def test_sha256_hex_known_value():
    # sha256("") is a published constant
    assert sha256_hex(b"") == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
