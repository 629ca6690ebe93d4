"""Model checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic  b"TAATHPCK"
    4 bytes   uint32 format version (currently 1)
    8 bytes   uint64 header length N
    N bytes   UTF-8 JSON header:
                {"version": 1,
                 "model_config": {...},
                 "tensors": [{"name": str, "shape": [int, ...],
                              "offset": int, "count": int}, ...],
                 "extra": {...}}
    rest      float64 little-endian payload; tensor k occupies
              payload[offset : offset + count] (units of 8 bytes), row-major.

The JSON header is written with sorted keys and no timestamps, so equal
parameters give byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .params import ModelParams, parameter_shapes

MAGIC = b"TAATHPCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: ModelParams, path: str | Path, extra: dict | None = None) -> None:
    tensors, chunks, offset = [], [], 0
    for name, arr in params.arrays.items():
        flat = np.ascontiguousarray(arr, dtype="<f8").reshape(-1)
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(flat.size)})
        chunks.append(flat.tobytes())
        offset += flat.size
    header = json.dumps({"version": VERSION, "model_config": params.config.to_dict(),
                         "tensors": tensors, "extra": extra or {}},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)
    Path(path).write_bytes(blob)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    """Returns ``(params, extra)``."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    payload = np.frombuffer(blob[20 + hlen:], dtype="<f8")
    cfg = ModelConfig.from_dict(header["model_config"])
    expected = parameter_shapes(cfg)
    arrays = {}
    for t in header["tensors"]:
        end = t["offset"] + t["count"]
        if end > payload.size:
            raise CheckpointError(f"{path}: tensor {t['name']} runs past the payload")
        arrays[t["name"]] = payload[t["offset"]:end].astype(np.float64).reshape(t["shape"])
    if {n: a.shape for n, a in arrays.items()} != {n: tuple(s) for n, s in expected.items()}:
        raise CheckpointError(f"{path}: tensor set does not match the stored model config")
    arrays = {n: arrays[n] for n in expected}
    return ModelParams(cfg, arrays), header.get("extra", {})
