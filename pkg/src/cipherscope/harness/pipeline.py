"""Mid-level pipeline steps shared by the CLI and the tests."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..features import DEFAULT_MAX_S, FeatureConfig, SentenceMatrix, build_sentence_matrix
from ..isa import Program, parse_program
from ..synth.dataset import load_manifest
from ..tracer import DEFAULT_STEP_LIMIT, ExecError, execute
from ..dcnn.model import ModelConfig, ModelParams, forward


class ExtractionError(RuntimeError):
    pass


def extract_record(
    program: Program,
    step_limit: int = DEFAULT_STEP_LIMIT,
    no_entropy: bool = False,
    max_s: int = DEFAULT_MAX_S,
    label: str | None = None,
) -> SentenceMatrix:
    """Execute one program and build its sentence matrix."""
    trace = execute(program, step_limit)
    if not trace.halted:
        raise ExtractionError(f"step limit {step_limit} exceeded")
    config = FeatureConfig(max_s=max_s)
    return build_sentence_matrix(
        trace.blocks, config, zero_entropy=no_entropy,
        label=label if label is not None else program.label,
    )


def extract_dataset(
    manifest_path: str | Path,
    step_limit: int = DEFAULT_STEP_LIMIT,
    no_entropy: bool = False,
    max_s: int = DEFAULT_MAX_S,
    log=None,
) -> tuple[dict, list[SentenceMatrix], list[tuple[int, str]]]:
    """Trace every sample in a manifest.  Per-sample failures are recorded
    and skipped; more than 5% skips aborts the extraction."""
    header, rows = load_manifest(manifest_path)
    base = Path(manifest_path).parent
    records: list[SentenceMatrix] = []
    skipped: list[tuple[int, str]] = []
    for row in rows:
        try:
            program = parse_program((base / row["path"]).read_text())
            records.append(
                extract_record(program, step_limit, no_entropy, max_s, row["label"])
            )
        except (OSError, ValueError, ExecError, ExtractionError) as exc:
            skipped.append((row["index"], str(exc)))
        if log is not None and (len(records) + len(skipped)) % 50 == 0:
            log(len(records) + len(skipped), len(rows))
    if len(skipped) > 0.05 * len(rows):
        raise ExtractionError(
            f"{len(skipped)}/{len(rows)} samples failed extraction: {skipped[:3]}"
        )
    return header, records, skipped


@dataclass
class EvalSummary:
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    confusion: np.ndarray  # rows = actual, cols = predicted
    predictions: list[int]

    def format_confusion(self, classes: list[str]) -> str:
        width = max(max(len(c) for c in classes), 5) + 2
        lines = ["x = predicted, y = actual"]
        lines.append(" " * width + "".join(f"{c:>{width}}" for c in classes))
        for i, c in enumerate(classes):
            row = "".join(f"{int(v):>{width}}" for v in self.confusion[i])
            lines.append(f"{c:>{width}}" + row)
        return "\n".join(lines)


def evaluate(params: ModelParams, config: ModelConfig, classes: list[str],
             samples: list[SentenceMatrix]) -> EvalSummary:
    if not samples:
        raise ValueError("nothing to evaluate")
    class_of = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    preds: list[int] = []
    for sm in samples:
        probs, _ = forward(params, config, sm.values, train_mode=False)
        pred = int(np.argmax(probs))
        preds.append(pred)
        confusion[class_of[sm.label], pred] += 1
    accuracy = float(np.trace(confusion) / confusion.sum())
    precision, recall = {}, {}
    for i, c in enumerate(classes):
        col = confusion[:, i].sum()
        row = confusion[i, :].sum()
        precision[c] = float(confusion[i, i] / col) if col else 0.0
        recall[c] = float(confusion[i, i] / row) if row else 0.0
    return EvalSummary(accuracy, precision, recall, confusion, preds)


def classify_program(
    params: ModelParams,
    config: ModelConfig,
    classes: list[str],
    program: Program,
    step_limit: int = DEFAULT_STEP_LIMIT,
    no_entropy: bool = False,
    max_s: int = DEFAULT_MAX_S,
) -> list[tuple[str, float]]:
    """Full pipeline on one program; classes ranked by probability."""
    sm = extract_record(program, step_limit, no_entropy, max_s)
    probs, _ = forward(params, config, sm.values, train_mode=False)
    ranked = sorted(zip(classes, probs), key=lambda cp: (-cp[1], cp[0]))
    return [(c, float(p)) for c, p in ranked]
