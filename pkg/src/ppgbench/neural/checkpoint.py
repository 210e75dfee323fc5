"""Self-describing checkpoint container.

Layout: 8-byte magic ``PPGBCKPT``, little-endian uint32 format version,
uint64 header length, UTF-8 JSON header, then raw little-endian float64
tensors at the offsets listed in the header. The header holds the
architecture descriptor, tensor index, training config and history.
Serialisation is byte-deterministic for equal inputs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .model import ModelState, parameter_shapes

MAGIC = b"PPGBCKPT"
VERSION = 1
_F64 = np.dtype("<f8")


def _tensors(model: ModelState) -> dict:
    out = dict(model.params)
    if model.target_offset is not None:
        out["target.offset"] = np.asarray(model.target_offset, dtype=np.float64)
        out["target.scale"] = np.asarray(model.target_scale, dtype=np.float64)
    return out


def to_bytes(model: ModelState, config=None, history=None, metadata=None) -> bytes:
    tensors = _tensors(model)
    index, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=_F64)
        data = arr.tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = {
        "architecture": model.arch,
        "tensors": index,
        "extra": model.extra,
        "config": config,
        "history": history,
        "metadata": metadata or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=True).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(blobs)


def save_checkpoint(path, model: ModelState, config=None, history=None, metadata=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model, config, history, metadata))
    return path


def from_bytes(raw: bytes):
    """Returns ``(model, header)``."""
    if raw[: len(MAGIC)] != MAGIC:
        raise ValidationError("not a ppgbench checkpoint (bad magic header)")
    version, hlen = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != VERSION:
        raise ValidationError(f"unsupported checkpoint version {version}")
    start = len(MAGIC) + struct.calcsize("<IQ")
    header = json.loads(raw[start : start + hlen].decode())
    body = raw[start + hlen :]
    tensors = {}
    for entry in header["tensors"]:
        chunk = body[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if len(chunk) != entry["nbytes"]:
            raise ValidationError(f"checkpoint truncated in tensor {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype=_F64).reshape(entry["shape"]).copy()
    arch = header["architecture"]
    params = {name: tensors.pop(name) for name in parameter_shapes(arch)}
    for name, shape in parameter_shapes(arch).items():
        if params[name].shape != tuple(shape):
            raise ValidationError(f"tensor {name} has shape {params[name].shape}, expected {shape}")
    model = ModelState(arch, params, tensors.get("target.offset"), tensors.get("target.scale"),
                       header.get("extra") or {})
    return model, header


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())
