"""Single-file dataset container: fixed JSON header plus length-prefixed
records of little-endian float64 sentence matrices."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..features import SentenceMatrix

MAGIC = b"CSDC"
VERSION = 1


class ContainerError(ValueError):
    pass


def write_container(path: str | Path, records: list[SentenceMatrix], *,
                    classes: list[str], mnemonics: tuple[str, ...],
                    master_seed: int) -> None:
    if not records:
        raise ContainerError("refusing to write an empty container")
    d = records[0].d
    header = {
        "format_version": VERSION,
        "d": d,
        "classes": list(classes),
        "mnemonics": list(mnemonics),
        "master_seed": master_seed,
        "count": len(records),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for sm in records:
            if sm.d != d:
                raise ContainerError(f"record d={sm.d} does not match header d={d}")
            if sm.label is not None and sm.label not in classes:
                raise ContainerError(f"label '{sm.label}' not in class list")
            meta = json.dumps(
                {"label": sm.label, "d": sm.d, "s": sm.s, "truncated": sm.truncated},
                sort_keys=True,
            ).encode()
            fh.write(struct.pack("<I", len(meta)))
            fh.write(meta)
            fh.write(np.ascontiguousarray(sm.values, dtype="<f8").tobytes())


def read_container(path: str | Path) -> tuple[dict, list[SentenceMatrix]]:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise ContainerError(f"{path}: not a dataset container")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    header = json.loads(raw[12 : 12 + hlen])
    d = int(header["d"])
    offset = 12 + hlen
    records: list[SentenceMatrix] = []
    while offset < len(raw):
        (mlen,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        meta = json.loads(raw[offset : offset + mlen])
        offset += mlen
        if int(meta["d"]) != d:
            raise ContainerError(f"{path}: record d={meta['d']} vs header d={d}")
        if meta["label"] is not None and meta["label"] not in header["classes"]:
            raise ContainerError(f"{path}: unknown label '{meta['label']}'")
        count = int(meta["d"]) * int(meta["s"])
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        records.append(
            SentenceMatrix(
                values.reshape(int(meta["d"]), int(meta["s"])).copy(),
                label=meta["label"],
                truncated=bool(meta["truncated"]),
            )
        )
    if len(records) != header.get("count", len(records)):
        raise ContainerError(f"{path}: truncated container")
    return header, records
