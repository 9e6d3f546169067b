"""Sentence-matrix feature extraction from carved block sequences.

Each executed basic block becomes one column; each of the d mnemonic
channels becomes one row.  Entry (i, j) is the block's count of mnemonic i
scaled by (1 + entropy score) of block j, so a trace with no memory writes
degrades gracefully to raw opcode counts (which is also how the no-entropy
ablation is expressed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .isa import WEIGHTED_MNEMONICS
from .tracer import BlockRecord, Trace

DEFAULT_MAX_S = 4096


@dataclass(frozen=True)
class FeatureConfig:
    mnemonics: tuple[str, ...] = WEIGHTED_MNEMONICS
    max_s: int = DEFAULT_MAX_S


@dataclass
class SentenceMatrix:
    """d x s feature matrix; column order follows trace order."""

    values: np.ndarray
    label: str | None = None
    truncated: bool = False

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def s(self) -> int:
        return self.values.shape[1]


_CHANNEL_OF = {m: i for i, m in enumerate(WEIGHTED_MNEMONICS)}


def build_sentence_matrix(
    blocks: list[BlockRecord],
    config: FeatureConfig = FeatureConfig(),
    zero_entropy: bool = False,
    label: str | None = None,
) -> SentenceMatrix:
    """Turn a block sequence into a d x s matrix.

    ``zero_entropy`` forces every entropy score to 0 (the ablation mode),
    which reduces every column to its raw mnemonic counts.
    """
    if not blocks:
        raise ValueError("cannot build a sentence matrix from zero blocks")
    truncated = len(blocks) > config.max_s
    use = blocks[: config.max_s]

    d = len(config.mnemonics)
    rows = [_CHANNEL_OF[m] for m in config.mnemonics]
    values = np.empty((d, len(use)), dtype=np.float64)
    for j, blk in enumerate(use):
        scale = 1.0 if zero_entropy else 1.0 + blk.entropy_score
        for i, r in enumerate(rows):
            values[i, j] = blk.mnemonic_counts[r] * scale
    return SentenceMatrix(values, label=label, truncated=truncated)


def select_mnemonics(traces: list[Trace], d: int) -> tuple[str, ...]:
    """The ``d`` most frequent weighted-eligible mnemonics across a corpus
    of traces, ties broken by the fixed opcode enumeration order."""
    if not traces:
        raise ValueError("empty corpus")
    totals = np.zeros(len(WEIGHTED_MNEMONICS), dtype=np.int64)
    for tr in traces:
        for blk in tr.blocks:
            totals += np.asarray(blk.mnemonic_counts, dtype=np.int64)
    observed = [i for i in range(len(totals)) if totals[i] > 0]
    if d > len(observed):
        raise ValueError(f"d={d} exceeds the {len(observed)} observed opcodes")
    order = sorted(observed, key=lambda i: (-totals[i], i))
    return tuple(WEIGHTED_MNEMONICS[i] for i in order[:d])
