"""Procedural generation of labeled, obfuscated cryptographic programs."""

from .dataset import (
    CLASS_LABELS,
    Codegen,
    DatasetManifest,
    Payload,
    SynthSpec,
    build_dataset,
    load_manifest,
    make_spec,
    synthesize,
)
from .transforms import apply_obfuscation, codegen_variants, inject_arithmetic

__all__ = [
    "CLASS_LABELS",
    "Codegen",
    "DatasetManifest",
    "Payload",
    "SynthSpec",
    "apply_obfuscation",
    "build_dataset",
    "codegen_variants",
    "inject_arithmetic",
    "load_manifest",
    "make_spec",
    "synthesize",
]
