import json
import math

import jsonschema
import numpy as np
import pytest

from airy_superres.files import (
    SCHEMA_NAMES,
    atomic_write_bytes,
    dumps_json,
    format_csv,
    load_schema,
    read_json,
    read_model,
    read_photons,
    sidecar_path,
    validate,
    write_json,
    write_model,
    write_photons,
    write_sidecar,
)
from airy_superres.sampling import SuperpositionModel, sample


def test_all_schemas_load_and_are_valid():
    for name in SCHEMA_NAMES:
        schema = load_schema(name)
        jsonschema.Draft202012Validator.check_schema(schema)
    with pytest.raises(KeyError):
        load_schema("nope")


def test_dumps_json_is_canonical():
    obj = {"b": np.float64(0.1), "a": np.arange(3), "c": (np.int64(2), True), "d": math.nan}
    text = dumps_json(obj)
    assert text.endswith("\n")
    assert list(json.loads(text)) == ["a", "b", "c", "d"]
    assert json.loads(text) == {"a": [0, 1, 2], "b": 0.1, "c": [2, True], "d": None}
    assert dumps_json(obj) == text


def test_format_csv_round_trips_floats():
    vals = [0.1, 1 / 3, -2.5e-300, 12345.678901234567]
    data = format_csv(["k", "v"], [(i, v) for i, v in enumerate(vals)]).decode()
    lines = data.splitlines()
    assert lines[0] == "k,v"
    for i, (line, v) in enumerate(zip(lines[1:], vals)):
        k, s = line.split(",")
        assert int(k) == i and float(s) == v


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "out.bin"
    atomic_write_bytes(target, b"abc")
    atomic_write_bytes(target, b"xyz")
    assert target.read_bytes() == b"xyz"
    assert sorted(p.name for p in target.parent.iterdir()) == ["out.bin"]


def test_json_round_trip_with_schema(tmp_path):
    m = SuperpositionModel([0.25, 0.75], [[0.0, 1.0], [2.0, -1.0]], 0.3, label="x")
    path = tmp_path / "m.json"
    write_model(path, m)
    again = read_model(path)
    assert np.array_equal(again.centers, m.centers) and again.sigma == m.sigma
    with pytest.raises(jsonschema.ValidationError):
        write_json(tmp_path / "bad.json", {"sigma": -1, "weights": [1], "centers": [[0, 0]]}, "model")
    (tmp_path / "bad2.json").write_text('{"sigma": 1.0, "weights": [1.0]}')
    with pytest.raises(jsonschema.ValidationError):
        read_json(tmp_path / "bad2.json", "model")


def test_sidecar_carries_timestamp_only_beside_output(tmp_path):
    path = tmp_path / "a.csv"
    atomic_write_bytes(path, b"x\n")
    write_sidecar(path, {"seed": 3})
    meta = read_json(sidecar_path(path))
    assert meta["seed"] == 3 and "written_at" in meta
    assert path.read_bytes() == b"x\n"


def test_photon_round_trip(tmp_path):
    batch = sample(SuperpositionModel([1.0], [[0.1, 0.2]], 0.4), 257, seed=5, granularity=1e-3)
    path = tmp_path / "p.csv"
    write_photons(path, batch)
    again = read_photons(path)
    assert np.array_equal(again.points, batch.points)
    assert again.sigma == 0.4 and again.granularity == 1e-3 and again.seed == 5
    validate(read_json(sidecar_path(path)), "photon_meta")


def test_read_photons_without_sidecar(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y\n0.5,0.25\n")
    with pytest.raises(ValueError):
        read_photons(path)
    batch = read_photons(path, sigma=1.0)
    assert batch.points.shape == (1, 2)
    (tmp_path / "q.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_photons(tmp_path / "q.csv", sigma=1.0)
