"""Flat-file volume and sinogram storage.

Arrays go to .raw as little-endian float32 in C order with a JSON sidecar
(same stem, .json) carrying shape, dtype and the acquisition metadata
needed to reload without guessing.  Loads validate byte counts against the
sidecar before reshaping.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .ct.volume import Sinogram, Volume

_DTYPE = "<f4"


def _sidecar(path: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + ".json"


def _write_raw(path: str, values: np.ndarray, meta: dict) -> None:
    data = np.ascontiguousarray(values, dtype=_DTYPE)
    meta = dict(meta)
    meta["shape"] = list(data.shape)
    meta["dtype"] = _DTYPE
    with open(path, "wb") as fh:
        fh.write(data.tobytes())
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_raw(path: str) -> tuple[np.ndarray, dict]:
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    shape = tuple(int(n) for n in meta["shape"])
    count = int(np.prod(shape))
    data = np.fromfile(path, dtype=meta.get("dtype", _DTYPE))
    if data.size != count:
        raise ValueError(f"{path}: expected {count} values for shape {shape}, "
                         f"file holds {data.size}")
    return data.reshape(shape).astype(np.float64), meta


def save_volume(path: str, vol: Volume) -> None:
    _write_raw(path, vol.values, {
        "kind": "volume",
        "spacing_mm": list(vol.spacing),
        "units": vol.units,
    })


def load_volume(path: str) -> Volume:
    values, meta = _read_raw(path)
    if meta.get("kind") != "volume":
        raise ValueError(f"{path}: sidecar kind {meta.get('kind')!r} is not "
                         "'volume'")
    return Volume(values, tuple(meta["spacing_mm"]), meta["units"])


def save_sinogram(path: str, sino: Sinogram) -> None:
    _write_raw(path, sino.values, {
        "kind": "sinogram",
        "angles_rad": [float(a) for a in sino.angles],
    })


def load_sinogram(path: str) -> Sinogram:
    values, meta = _read_raw(path)
    if meta.get("kind") != "sinogram":
        raise ValueError(f"{path}: sidecar kind {meta.get('kind')!r} is not "
                         "'sinogram'")
    angles = np.asarray(meta["angles_rad"], dtype=np.float64)
    return Sinogram(values, angles)
