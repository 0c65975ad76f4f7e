import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraclap import io as fio
from fraclap.grid import GridFunction, GridSpec
from fraclap.refsolve import convergence_study


def test_json_has_schema_and_sorted_keys():
    text = fio.dump_json({"b": 1, "a": np.float64(2.5)}, kind="demo")
    doc = json.loads(text)
    assert doc["schema_version"] == fio.SCHEMA_VERSION and doc["kind"] == "demo"
    assert list(doc) == sorted(doc)


def test_json_is_byte_deterministic(tmp_path):
    doc = {"x": np.arange(3), "y": {"z": np.float32(0.5), "w": np.bool_(True)}}
    fio.dump_json(doc, tmp_path / "a.json")
    fio.dump_json(dict(reversed(list(doc.items()))), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_non_finite_values_become_null():
    doc = json.loads(fio.dump_json({"bad": math.inf, "nan": np.nan}))
    assert doc["bad"] is None and doc["nan"] is None


def test_grid_csv_layout():
    spec = GridSpec(M=3, d=2)
    text = fio.write_grid_csv(GridFunction(np.arange(4.0), spec))
    lines = text.splitlines()
    assert lines[0] == "j1,j2,value"
    assert lines[1:3] == ["1,1,0.0", "2,1,1.0"]


@settings(max_examples=20, deadline=None)
@given(M=st.integers(2, 6), d=st.integers(1, 3), seed=st.integers(0, 10**6))
def test_grid_csv_round_trip(tmp_path_factory, M, d, seed):
    spec = GridSpec(M=M, d=d)
    u = GridFunction(np.random.default_rng(seed).standard_normal(spec.size), spec)
    path = tmp_path_factory.mktemp("csv") / "u.csv"
    fio.write_grid_csv(u, path)
    np.testing.assert_array_equal(fio.read_grid_csv(path, spec).values, u.values)


def test_grid_csv_rejects_wrong_header_and_gaps(tmp_path):
    spec = GridSpec(M=4)
    (tmp_path / "h.csv").write_text("i,value\n1,0\n")
    with pytest.raises(ValueError):
        fio.read_grid_csv(tmp_path / "h.csv", spec)
    (tmp_path / "g.csv").write_text("j1,value\n1,0\n2,0\n")
    with pytest.raises(ValueError):
        fio.read_grid_csv(tmp_path / "g.csv", spec)


def test_grid_binary_round_trip(tmp_path):
    spec = GridSpec(M=5, d=2)
    u = GridFunction(np.linspace(-1, 1, spec.size), spec)
    fio.write_grid_binary(u, tmp_path / "u.bin")
    assert (tmp_path / "u.bin").stat().st_size == 8 * spec.size
    np.testing.assert_array_equal(fio.read_grid_binary(tmp_path / "u.bin", spec).values, u.values)


def test_matrix_binary_round_trip(tmp_path):
    U = np.array([[1 + 2j, 3.0], [0.5j, -1.0]])
    fio.write_matrix_binary(U, tmp_path / "U.bin")
    assert (tmp_path / "U.bin").read_bytes()[:16] == np.array([1.0, 2.0], "<f8").tobytes()
    np.testing.assert_array_equal(fio.read_matrix_binary(tmp_path / "U.bin", 2), U)


def test_convergence_csv_columns():
    rep = convergence_study(0.5, 1, "sin", M_list=(8, 16, 32))
    lines = fio.write_convergence_csv(rep).splitlines()
    assert lines[0] == "M,h,error,order"
    assert lines[1].split(",")[0] == "8" and lines[1].endswith(",")
    assert 1.8 <= float(lines[3].split(",")[3]) <= 2.2
