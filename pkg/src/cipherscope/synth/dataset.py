"""Sample specification, the synthesize pipeline, and dataset builds.

A :class:`SynthSpec` fully determines one program: identical specs yield
byte-identical output.  ``build_dataset`` derives every spec from
``(master_seed, index)`` so any sample can be regenerated independently.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..isa import Program, disassemble
from .builder import Asm
from .templates import BUILDERS
from .transforms import Codegen, OBFUSCATION_MODES, apply_obfuscation, inject_arithmetic, codegen_variants

#: Class labels in canonical (confusion matrix) order.
CLASS_LABELS = ("aes", "rc4", "blowfish", "md5", "rsa", "rsa+aes")

UNROLL_FACTORS = (1, 2, 4)


@dataclass(frozen=True)
class Payload:
    key: bytes = b""
    iv: bytes = b""
    plaintext: bytes = b""


@dataclass(frozen=True)
class SynthSpec:
    label: str
    obfuscation: str
    codegen: Codegen
    payload: Payload
    seed: int


class PayloadError(ValueError):
    pass


def _check_payload(label: str, pay: Payload) -> None:
    k, iv, pt = len(pay.key), len(pay.iv), len(pay.plaintext)
    if label == "aes" or label == "rsa+aes":
        if k != 16 or iv != 16:
            raise PayloadError(f"{label}: need 16-byte key and iv, got {k}/{iv}")
        if pt == 0 or pt % 16:
            raise PayloadError(f"{label}: plaintext must be whole 16-byte blocks")
    elif label == "rc4":
        if not 5 <= k <= 16:
            raise PayloadError(f"rc4: key must be 5-16 bytes, got {k}")
        if pt == 0:
            raise PayloadError("rc4: empty plaintext")
    elif label == "blowfish":
        if not 4 <= k <= 56:
            raise PayloadError(f"blowfish: key must be 4-56 bytes, got {k}")
        if pt == 0 or pt % 8:
            raise PayloadError("blowfish: plaintext must be whole 8-byte blocks")
    elif label == "md5":
        if k or iv:
            raise PayloadError("md5: takes no key or iv")
    elif label == "rsa":
        if k != 16:
            raise PayloadError(f"rsa: need 16 seed bytes for the modulus, got {k}")
        if pt != 8:
            raise PayloadError(f"rsa: message must be 8 bytes, got {pt}")
    else:
        raise PayloadError(f"unsupported label '{label}'")


def _derive_payload(label: str, rng: np.random.Generator) -> Payload:
    def rb(n: int) -> bytes:
        return bytes(int(x) for x in rng.integers(0, 256, size=n))

    if label in ("aes", "rsa+aes"):
        return Payload(rb(16), rb(16), rb(16 * int(rng.integers(1, 4))))
    if label == "rc4":
        return Payload(rb(int(rng.integers(5, 17))), b"", rb(int(rng.integers(16, 49))))
    if label == "blowfish":
        return Payload(rb(int(rng.integers(4, 57))), b"", rb(8 * int(rng.integers(1, 3))))
    if label == "md5":
        return Payload(b"", b"", rb(int(rng.integers(0, 97))))
    if label == "rsa":
        return Payload(rb(16), b"", rb(8))
    raise PayloadError(f"unsupported label '{label}'")


def make_spec(label: str, seed: int) -> SynthSpec:
    """Derive a full sample spec (payload, obfuscation, codegen) from one seed."""
    if label not in BUILDERS:
        raise PayloadError(f"unsupported label '{label}'")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5EED])))
    payload = _derive_payload(label, rng)
    obf = OBFUSCATION_MODES[int(rng.integers(len(OBFUSCATION_MODES)))]
    cg = Codegen(
        rename_seed=int(rng.integers(1 << 62)),
        schedule_seed=int(rng.integers(1 << 62)),
        unroll=UNROLL_FACTORS[int(rng.integers(len(UNROLL_FACTORS)))],
    )
    return SynthSpec(label, obf, cg, payload, seed)


def synthesize(spec: SynthSpec) -> Program:
    """Template -> obfuscation -> injected arithmetic -> codegen variants.

    Pure function of the spec; the emitted program carries the class label.
    """
    if spec.label not in BUILDERS:
        raise PayloadError(f"unsupported label '{spec.label}'")
    if spec.obfuscation not in OBFUSCATION_MODES:
        raise ValueError(f"unknown obfuscation mode '{spec.obfuscation}'")
    _check_payload(spec.label, spec.payload)

    asm: Asm = BUILDERS[spec.label](spec.payload.key, spec.payload.iv, spec.payload.plaintext)
    p = asm.build()
    p = apply_obfuscation(p, spec.obfuscation, spec.seed)
    p = inject_arithmetic(p, spec.seed)
    p = codegen_variants(p, spec.codegen)
    return dataclasses.replace(p, label=spec.label)


# ---------------------------------------------------------------------------
# Dataset build
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    samples: list[tuple[SynthSpec, str]]  # (spec, path relative to manifest dir)
    class_counts: dict[str, int]
    master_seed: int


def _sample_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([master_seed, index])
    return int(ss.generate_state(1, np.uint64)[0])


def build_dataset(classes: list[str], n: int, master_seed: int,
                  out_dir: str | Path) -> DatasetManifest:
    """Write ``n`` programs (balanced over ``classes``, within one) plus a
    JSON-lines manifest.  Every sample derives from (master_seed, index)."""
    classes = list(classes)
    if n < len(classes):
        raise ValueError("n must be at least the number of classes")
    for c in classes:
        if c not in BUILDERS:
            raise PayloadError(f"unsupported label '{c}'")
    out = Path(out_dir)
    (out / "programs").mkdir(parents=True, exist_ok=True)

    samples: list[tuple[SynthSpec, str]] = []
    counts = {c: 0 for c in classes}
    rows = []
    for i in range(n):
        label = classes[i % len(classes)]
        seed = _sample_seed(master_seed, i)
        spec = make_spec(label, seed)
        program = synthesize(spec)
        safe = label.replace("+", "_")
        rel = f"programs/{i:05d}_{safe}.asm"
        (out / rel).write_text(disassemble(program))
        samples.append((spec, rel))
        counts[label] += 1
        rows.append({
            "index": i,
            "label": label,
            "obfuscation": spec.obfuscation,
            "codegen": {
                "rename_seed": spec.codegen.rename_seed,
                "schedule_seed": spec.codegen.schedule_seed,
                "unroll": spec.codegen.unroll,
            },
            "seed": seed,
            "path": rel,
        })

    header = {"master_seed": master_seed, "classes": classes, "n": n,
              "class_counts": counts}
    with open(out / "manifest.jsonl", "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return DatasetManifest(samples, counts, master_seed)


def load_manifest(path: str | Path) -> tuple[dict, list[dict]]:
    """Read a manifest file; returns (header, rows)."""
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or "classes" not in lines[0]:
        raise ValueError(f"{path}: not a dataset manifest")
    return lines[0], lines[1:]
