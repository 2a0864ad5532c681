"""Model checkpoint container.

A checkpoint is a single binary file of length-prefixed named records:

    magic   8 bytes                 b"QVNXCKP1"
    record  repeated until EOF:
        u32 LE   name length
        bytes    record name (UTF-8)
        u64 LE   payload length
        bytes    payload

Record names and payloads:

* ``config``        UTF-8 JSON of the model configuration (every
                    hyperparameter, including ablation toggles).
* ``meta``          UTF-8 JSON free-form dict (data seed, subject split,
                    window geometry); optional.
* ``tensor:<name>`` an array: u32 LE ndim, ndim x u64 LE dims, then the
                    values as float64 little-endian in C order.  Written for
                    every trainable parameter, every frozen phase array, and
                    (when present) the normalization statistics under
                    ``norm.mean`` / ``norm.std``.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import NormStats
from .model import ModelConfig, QuanvNeXt

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"QVNXCKP1"


@dataclass
class Checkpoint:
    model: QuanvNeXt
    stats: NormStats | None
    meta: dict


def _write_record(fh, name: str, payload: bytes) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)


def _tensor_payload(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype=np.float64)
    out = io.BytesIO()
    out.write(struct.pack("<I", array.ndim))
    for dim in array.shape:
        out.write(struct.pack("<Q", dim))
    out.write(array.astype("<f8").tobytes())
    return out.getvalue()


def _parse_tensor(payload: bytes) -> np.ndarray:
    view = memoryview(payload)
    (ndim,) = struct.unpack_from("<I", view, 0)
    offset = 4
    shape = []
    for _ in range(ndim):
        (dim,) = struct.unpack_from("<Q", view, offset)
        shape.append(int(dim))
        offset += 8
    data = np.frombuffer(view, dtype="<f8", offset=offset)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise ValueError(f"tensor payload holds {data.size} values, expected {expected}")
    return data.astype(np.float64).reshape(shape)


def save_checkpoint(path: Path, model: QuanvNeXt, stats: NormStats | None = None,
                    meta: dict | None = None) -> Path:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        _write_record(fh, "config", json.dumps(model.config.to_dict()).encode())
        if meta:
            _write_record(fh, "meta", json.dumps(meta).encode())
        for name, tensor in model.named_parameters():
            _write_record(fh, f"tensor:{name}", _tensor_payload(tensor.data))
        for name, phases in model.frozen_phases():
            _write_record(fh, f"tensor:{name}", _tensor_payload(phases))
        if stats is not None:
            _write_record(fh, "tensor:norm.mean", _tensor_payload(stats.mean))
            _write_record(fh, "tensor:norm.std", _tensor_payload(stats.std))
    return path


def _read_records(path: Path) -> dict[str, bytes]:
    blob = Path(path).read_bytes()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path} is not a checkpoint (bad magic)")
    records: dict[str, bytes] = {}
    offset = len(_MAGIC)
    while offset < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset: offset + name_len].decode("utf-8")
        offset += name_len
        (payload_len,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        records[name] = blob[offset: offset + payload_len]
        offset += payload_len
    return records


def load_checkpoint(path: Path) -> Checkpoint:
    records = _read_records(path)
    if "config" not in records:
        raise ValueError(f"{path}: checkpoint has no config record")
    config = ModelConfig.from_dict(json.loads(records["config"].decode()))
    model = QuanvNeXt(config, seed=0)
    for name, tensor in model.named_parameters():
        key = f"tensor:{name}"
        if key not in records:
            raise ValueError(f"{path}: missing parameter record {name!r}")
        loaded = _parse_tensor(records[key])
        if loaded.shape != tensor.data.shape:
            raise ValueError(
                f"{path}: parameter {name!r} has shape {loaded.shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data = loaded
    layers = [model.embedding] + [b.quanv for b in model.blocks] + [model.projection]
    for layer in layers:
        key = f"tensor:{layer.name}.phi"
        if key not in records:
            raise ValueError(f"{path}: missing frozen phase record for {layer.name!r}")
        phases = _parse_tensor(records[key])
        if phases.shape != layer.phi.shape:
            raise ValueError(f"{path}: phase record {layer.name!r} has wrong shape")
        phases.flags.writeable = False
        layer.phi = phases
    stats = None
    if "tensor:norm.mean" in records and "tensor:norm.std" in records:
        stats = NormStats(
            mean=_parse_tensor(records["tensor:norm.mean"]),
            std=_parse_tensor(records["tensor:norm.std"]),
        )
    meta = json.loads(records["meta"].decode()) if "meta" in records else {}
    return Checkpoint(model=model, stats=stats, meta=meta)
