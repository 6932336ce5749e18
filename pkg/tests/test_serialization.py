import json
import math
from dataclasses import dataclass

import numpy as np
from hypothesis import given, strategies as st

from neumann_plap import serialization as S


@dataclass
class _Row:
    a: float
    b: np.ndarray


def test_floats_round_trip_exactly():
    xs = [0.1, 1 / 3, -2.5e-300, 1e308, 2.0**-1074]
    back = json.loads(S.dumps({"xs": xs}))
    assert back["xs"] == xs


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=20))
def test_round_trip_property(xs):
    assert json.loads(S.dumps(xs)) == xs


def test_non_finite_become_null():
    out = json.loads(S.dumps({"a": math.nan, "b": [math.inf, -math.inf, 1.0]}))
    assert out == {"a": None, "b": [None, None, 1.0]}


def test_numpy_and_dataclasses():
    obj = {"row": _Row(np.float64(0.5), np.arange(3)), "flag": np.bool_(True),
           "n": np.int64(4), "t": (1, 2)}
    out = json.loads(S.dumps(obj))
    assert out == {"row": {"a": 0.5, "b": [0, 1, 2]}, "flag": True, "n": 4, "t": [1, 2]}


def test_dumps_is_deterministic():
    obj = {"z": [1.0, {"y": 2}], "a": "text"}
    assert S.dumps(obj) == S.dumps(obj)
    assert S.dumps(obj).endswith("}\n")


def test_csv_cells():
    text = S.csv_text(["x", "v", "ok"], [{"x": "1,2", "v": math.nan, "ok": True},
                                        {"x": "a", "v": 0.1}])
    lines = text.splitlines()
    assert lines[0] == "x,v,ok"
    assert lines[1] == '"1,2",,true'
    assert lines[2] == "a,0.10000000000000001,"
