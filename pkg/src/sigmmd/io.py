"""Tensor container files and JSON/CSV report helpers.

Layout: 8 magic bytes, a little-endian uint64 header length, a UTF-8 JSON
header, then each tensor as raw little-endian float64 in header order. The
header holds ``kind``, free-form ``meta`` and per-tensor name/shape/offset.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset
from .errors import DataError
from .generator import GeneratorParams
from .noise import LambertParams, MAParams, NoiseModel

MAGIC = b"SIGMMD\x00\x01"


def save_tensors(path, kind: str, tensors: dict, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"kind": kind, "meta": meta or {}, "tensors": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_tensors(path, kind: str | None = None):
    """Return ``(kind, meta, tensors)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: not a tensor container")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode())
    if kind is not None and header["kind"] != kind:
        raise DataError(f"{path}: expected a '{kind}' file, found '{header['kind']}'")
    base = 16 + hlen
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["offset"]
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=start)
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(float)
    return header["kind"], header["meta"], tensors


def save_params(path, params: GeneratorParams, meta: dict | None = None) -> None:
    save_tensors(path, "generator", params.tensors(), meta)


def load_params(path):
    _, meta, tensors = load_tensors(path, "generator")
    return GeneratorParams.from_tensors(tensors), meta


def save_noise(path, model: NoiseModel, meta: dict | None = None) -> None:
    info = {
        "lambert": {"delta": model.lambert.delta, "mu": model.lambert.mu, "sigma": model.lambert.sigma},
        "scale_mean": model.scale_mean,
        "scale_std": model.scale_std,
        "extras": model.extras,
        **(meta or {}),
    }
    tensors = {"omega": np.array([model.ma.omega]), "betas": np.array(model.ma.betas), "history": model.history}
    save_tensors(path, "noise", tensors, info)


def load_noise(path) -> NoiseModel:
    _, meta, t = load_tensors(path, "noise")
    lam = LambertParams(**meta["lambert"])
    ma = MAParams(float(t["omega"][0]), tuple(t["betas"]))
    return NoiseModel(lam, ma, t["history"], meta["scale_mean"], meta["scale_std"], meta.get("extras", {}))


def save_dataset(path, ds: Dataset) -> None:
    days = ds.dates.astype(np.int64).astype(float)
    meta = {"split": None if ds.split is None else str(ds.split)}
    save_tensors(path, "dataset", {"days": days, "closes": ds.closes}, meta)


def load_dataset(path) -> Dataset:
    _, meta, t = load_tensors(path, "dataset")
    dates = t["days"].astype(np.int64).astype("datetime64[D]")
    return Dataset(dates, t["closes"], meta.get("split"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_series_csv(path, columns: dict) -> None:
    """Columns of equal length as one CSV; floats written with ``repr``."""
    names = list(columns)
    rows = zip(*(np.asarray(columns[n]).tolist() for n in names))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def manifest(command: str, config: dict, seed: int | None) -> dict:
    from . import _backend

    return {
        "command": command,
        "config": _jsonable(config),
        "config_hash": config_hash(config),
        "seed": seed,
        "code_version": __version__,
        "backend": _backend.backend(),
    }
