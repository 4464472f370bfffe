"""Reading and writing the on-disk formats.

Primary outputs (CSV and JSON) are byte-identical for identical inputs; any
wall-clock information goes to a ``<path>.meta.json`` sidecar instead.
Every write goes to a temporary file in the target directory and is renamed
into place, so readers never see a partial file.
"""

from __future__ import annotations

import datetime as _dt
import io
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .sampling import PhotonBatch, SuperpositionModel

SCHEMA_NAMES = ("model", "photon_meta", "estimate", "instance", "criteria")


def _plain(obj):
    # json.dumps hook for numpy scalars and arrays
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _scrub(obj):
    # NaN and inf are not JSON; map them to null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _scrub(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_scrub(v) for v in obj]
    return obj


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj) -> str:
    plain = json.loads(json.dumps(obj, default=_plain))
    return json.dumps(_scrub(plain), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj, schema=None):
    if schema is not None:
        validate(json.loads(dumps_json(obj)), schema)
    atomic_write_bytes(path, dumps_json(obj).encode())


def read_json(path, schema=None):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if schema is not None:
        validate(obj, schema)
    return obj


def sidecar_path(path):
    return Path(str(path) + ".meta.json")


def write_sidecar(path, meta, schema=None):
    """Metadata next to ``path``, stamped with the current UTC time."""
    body = dict(meta)
    body["written_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    write_json(sidecar_path(path), body, schema)


def load_schema(name):
    if name not in SCHEMA_NAMES:
        raise KeyError(f"unknown schema {name!r}")
    text = resources.files("airy_superres.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(obj, name):
    jsonschema.validate(obj, load_schema(name))


def format_csv(header, rows) -> bytes:
    """CSV with 17 significant digits so floats round-trip exactly."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue().encode()


def _cell(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def write_photons(path, batch: PhotonBatch):
    pts = np.asarray(batch.points, dtype=np.float64)
    # one formatted block is much faster than per-row writes for 10^7 photons
    body = "\n".join(f"{x:.17g},{y:.17g}" for x, y in pts)
    data = ("x,y\n" + body + ("\n" if len(pts) else "")).encode()
    atomic_write_bytes(path, data)
    write_sidecar(path, batch.metadata(), "photon_meta")


def read_photons(path, sigma=None, granularity=None) -> PhotonBatch:
    """Load photons; ``sigma`` and ``granularity`` default to the sidecar values."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "x,y":
            raise ValueError(f"{path}: expected header 'x,y', got {header!r}")
        pts = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
    pts = pts.reshape(-1, 2)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = read_json(side, "photon_meta")
    if sigma is None:
        if "sigma" not in meta:
            raise ValueError(f"{path}: sigma not given and no sidecar metadata found")
        sigma = meta["sigma"]
    if granularity is None:
        granularity = meta.get("granularity", 0.0)
    return PhotonBatch(
        points=pts,
        sigma=float(sigma),
        granularity=float(granularity),
        seed=int(meta.get("seed", 0)),
        poisson=bool(meta.get("poisson", False)),
        n_requested=int(meta.get("n_requested", len(pts))),
        meta=meta,
    )


def read_model(path) -> SuperpositionModel:
    return SuperpositionModel.from_dict(read_json(path, "model"))


def write_model(path, model: SuperpositionModel):
    write_json(path, model.to_dict(), "model")


__all__ = [
    "atomic_write_bytes",
    "dumps_json",
    "format_csv",
    "load_schema",
    "read_json",
    "read_model",
    "read_photons",
    "sidecar_path",
    "validate",
    "write_json",
    "write_model",
    "write_photons",
    "write_sidecar",
]
