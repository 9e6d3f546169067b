"""Versioned binary checkpoint: config, class list, mnemonic list, and all
tensors as little-endian float64, protected by a trailing SHA-256."""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams, init_params, validate_config

MAGIC = b"CSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, config: ModelConfig, params: ModelParams,
                    classes: list[str], mnemonics: tuple[str, ...], d: int) -> None:
    tensors = params.tensors()
    header = {
        "config": config.to_dict(),
        "classes": list(classes),
        "mnemonics": list(mnemonics),
        "d": d,
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(blob))
    out += blob
    for _, t in tensors:
        out += np.ascontiguousarray(t, dtype="<f8").tobytes()
    out += hashlib.sha256(out).digest()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, ModelParams, list[str], tuple[str, ...], int]:
    raw = Path(path).read_bytes()
    if len(raw) < 44 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(raw[12 : 12 + hlen])
    config = ModelConfig.from_dict(header["config"])
    d = int(header["d"])

    # Shapes must match what the config derives; reject anything else.
    expected = init_params(config, d)
    shapes = {n: t.shape for n, t in expected.tensors()}
    offset = 12 + hlen
    loaded: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in shapes or shapes[name] != shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {shape}, "
                                  f"expected {shapes.get(name)}")
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(body, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        loaded[name] = data.reshape(shape).copy()
    if set(loaded) != set(shapes):
        raise CheckpointError(f"{path}: tensor set mismatch")

    params = ModelParams(
        kernels=[loaded[f"conv{i}.kernel"] for i in range(config.num_layers)],
        biases=[loaded[f"conv{i}.bias"] for i in range(config.num_layers)],
        fc_w=loaded["fc.weight"],
        fc_b=loaded["fc.bias"],
    )
    validate_config(config, d)
    return config, params, list(header["classes"]), tuple(header["mnemonics"]), d
