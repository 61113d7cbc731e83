"""Binary checkpoint format for network weights.

Layout:
  bytes 0-3   magic b"RLDN"
  bytes 4-7   format version, uint32 little-endian
  bytes 8-11  header length in bytes, uint32 little-endian
  header      JSON (sorted keys, compact separators), utf-8
  payload     one float32 little-endian C-order block per parameter,
              in header order

The header records a network kind tag, free-form metadata and the
name/shape of every parameter block, so loading validates against the
architecture it is restored into.  Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .layers import Parameter

MAGIC = b"RLDN"
VERSION = 1


def save_checkpoint(path, kind: str, meta: dict, params: list[Parameter]) -> None:
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate parameter names: {dupes}")
    header = {
        "kind": kind,
        "meta": meta,
        "params": [{"name": p.name, "shape": list(p.data.shape)} for p in params],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (kind, meta, {name: float32 array})."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic {raw[:4]!r})")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    offset = 12 + hlen
    tensors: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        block = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
        tensors[entry["name"]] = block.reshape(shape).copy()
        offset += 4 * n
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameter blocks")
    return header["kind"], header["meta"], tensors


def restore_parameters(params: list[Parameter], tensors: dict[str, np.ndarray],
                       dtype=np.float32) -> None:
    """Copy loaded tensors into an existing parameter list, by name."""
    for p in params:
        if p.name not in tensors:
            raise ValueError(f"checkpoint is missing parameter {p.name!r}")
        t = tensors[p.name]
        if t.shape != p.data.shape:
            raise ValueError(f"checkpoint parameter {p.name!r} has shape {t.shape}, "
                             f"expected {p.data.shape}")
        p.data[...] = t.astype(dtype)
    extra = set(tensors) - {p.name for p in params}
    if extra:
        raise ValueError(f"checkpoint has unexpected parameters: {sorted(extra)}")
