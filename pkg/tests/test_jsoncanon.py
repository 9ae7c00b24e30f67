"""Canonical JSON byte stability."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from farmlight import jsoncanon


def test_golden_encoding():
    obj = {"b": 1, "a": [1.5, "x", None, True], "c": {"z": 0, "y": -2}}
    assert jsoncanon.dumps(obj) == '{"a":[1.5,"x",null,true],"b":1,"c":{"y":-2,"z":0}}'


def test_key_order_independent():
    assert jsoncanon.dumps({"a": 1, "b": 2}) == jsoncanon.dumps({"b": 2, "a": 1})


def test_no_whitespace():
    out = jsoncanon.dumps({"a": [1, 2], "b": {"c": 3}})
    assert " " not in out and "\n" not in out


def test_float_shortest_repr():
    assert jsoncanon.dumps(0.1) == "0.1"
    assert jsoncanon.dumps(1.0) == "1.0"
    assert jsoncanon.dumps(1e-12) == "1e-12"


def test_utf8_not_escaped():
    assert jsoncanon.dumps_bytes({"k": "café"}) == '{"k":"café"}'.encode("utf-8")


def test_nan_rejected_on_encode():
    with pytest.raises(ValueError):
        jsoncanon.dumps({"x": float("nan")})
    with pytest.raises(ValueError):
        jsoncanon.dumps({"x": float("inf")})


def test_nonfinite_rejected_on_decode():
    with pytest.raises(ValueError):
        jsoncanon.loads("[NaN]")
    with pytest.raises(ValueError):
        jsoncanon.loads("[Infinity]")


def test_loads_accepts_bytes_and_str():
    assert jsoncanon.loads(b'{"a":1}') == {"a": 1}
    assert jsoncanon.loads('{"a":1}') == {"a": 1}


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(min_value=-(2**53), max_value=2**53)
    | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=20),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=20,
)


@given(json_values)
@settings(max_examples=200)
def test_round_trip(value):
    decoded = jsoncanon.loads(jsoncanon.dumps(value))
    if isinstance(value, float) and value == 0.0 and math.copysign(1, value) < 0:
        assert decoded == 0.0  # -0.0 survives as a float zero
    else:
        assert decoded == value


@given(json_values)
@settings(max_examples=200)
def test_encoding_is_a_fixpoint(value):
    once = jsoncanon.dumps(value)
    again = jsoncanon.dumps(jsoncanon.loads(once))
    assert once == again
