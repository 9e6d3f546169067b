"""Training loop (mini-batch SGD with momentum) and random hyperparameter
search over a shuffled Cartesian product.

Everything is deterministic given the seeds: sample shuffles, dropout masks,
and parameter init all draw from generators derived from the config seed.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..features import SentenceMatrix
from .model import Grads, ModelConfig, ModelParams, backward, forward, init_params, validate_config


class NumericError(RuntimeError):
    """Training diverged (non-finite loss)."""


@dataclass(frozen=True)
class TrainSettings:
    lr: float = 0.02
    momentum: float = 0.9
    batch_size: int = 16
    epochs: int = 200

    def to_dict(self) -> dict:
        return {"lr": self.lr, "momentum": self.momentum,
                "batch_size": self.batch_size, "epochs": self.epochs}

    @staticmethod
    def from_dict(d: dict) -> "TrainSettings":
        return TrainSettings(
            lr=float(d.get("lr", 0.02)),
            momentum=float(d.get("momentum", 0.9)),
            batch_size=int(d.get("batch_size", 16)),
            epochs=int(d.get("epochs", 200)),
        )


@dataclass
class TrainReport:
    epochs: list[tuple[float, float]] = field(default_factory=list)  # (loss, test acc)
    confusion: np.ndarray | None = None  # rows = actual, cols = predicted
    wall_time_s: float = 0.0

    @property
    def final_accuracy(self) -> float:
        return self.epochs[-1][1] if self.epochs else 0.0


def split_stratified(labels: list[str], train_frac: float, seed: int
                     ) -> tuple[list[int], list[int]]:
    """Per-class seeded shuffle, then a train_frac split within each class."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5B11])))
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for lab in sorted(by_class):
        idx = by_class[lab]
        perm = rng.permutation(len(idx))
        cut = round(train_frac * len(idx))
        train_idx.extend(idx[k] for k in perm[:cut])
        test_idx.extend(idx[k] for k in perm[cut:])
    return sorted(train_idx), sorted(test_idx)


def _evaluate(params, config, samples: list[SentenceMatrix], class_of: dict[str, int]
              ) -> tuple[float, np.ndarray]:
    confusion = np.zeros((config.classes, config.classes), dtype=np.int64)
    hits = 0
    for sm in samples:
        probs, _ = forward(params, config, sm.values, train_mode=False)
        pred = int(np.argmax(probs))
        actual = class_of[sm.label]
        confusion[actual, pred] += 1
        hits += pred == actual
    return hits / max(len(samples), 1), confusion


def train(
    train_set: list[SentenceMatrix],
    test_set: list[SentenceMatrix],
    classes: list[str],
    config: ModelConfig,
    settings: TrainSettings = TrainSettings(),
    log=None,
) -> tuple[ModelParams, TrainReport]:
    """Mini-batch SGD with momentum.  Returns the final parameters and the
    per-epoch loss / test-accuracy curves plus the final confusion matrix."""
    if not train_set or not test_set:
        raise ValueError("empty train or test split")
    d = train_set[0].d
    validate_config(config, d)
    class_of = {c: i for i, c in enumerate(classes)}

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 0x7EA1])))
    params = init_params(config, d, rng)
    velocity = Grads(
        [np.zeros_like(k) for k in params.kernels],
        [np.zeros_like(b) for b in params.biases],
        np.zeros_like(params.fc_w),
        np.zeros_like(params.fc_b),
    )

    report = TrainReport()
    t0 = time.perf_counter()
    for epoch in range(settings.epochs):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), settings.batch_size):
            batch = order[start : start + settings.batch_size]
            acc: Grads | None = None
            for i in batch:
                sm = train_set[int(i)]
                probs, cache = forward(params, config, sm.values, train_mode=True, rng=rng)
                loss, grads = backward(params, config, cache, class_of[sm.label])
                losses.append(loss)
                if acc is None:
                    acc = grads
                else:
                    acc.add(grads)
            acc.scale(1.0 / len(batch))
            for v, g, p in zip(velocity.kernels, acc.kernels, params.kernels):
                v *= settings.momentum
                v -= settings.lr * g
                p += v
            for v, g, p in zip(velocity.biases, acc.biases, params.biases):
                v *= settings.momentum
                v -= settings.lr * g
                p += v
            velocity.fc_w *= settings.momentum
            velocity.fc_w -= settings.lr * acc.fc_w
            params.fc_w += velocity.fc_w
            velocity.fc_b *= settings.momentum
            velocity.fc_b -= settings.lr * acc.fc_b
            params.fc_b += velocity.fc_b

        mean_loss = float(np.mean(losses))
        if not np.isfinite(mean_loss):
            raise NumericError(f"loss diverged at epoch {epoch + 1}")
        acc_test, confusion = _evaluate(params, config, test_set, class_of)
        report.epochs.append((mean_loss, acc_test))
        report.confusion = confusion
        if log is not None:
            log(epoch + 1, mean_loss, acc_test)
    report.wall_time_s = time.perf_counter() - t0
    return params, report


# ---------------------------------------------------------------------------
# Random hyperparameter search
# ---------------------------------------------------------------------------

_SETTINGS_KEYS = {"lr", "momentum", "batch_size", "epochs"}


def _apply_choice(base_config: ModelConfig, base_settings: TrainSettings,
                  choice: dict) -> tuple[ModelConfig, TrainSettings]:
    cfg = base_config.to_dict()
    st = base_settings.to_dict()
    for key, value in choice.items():
        if key in _SETTINGS_KEYS:
            st[key] = value
        else:
            cfg[key] = value
    return ModelConfig.from_dict(cfg), TrainSettings.from_dict(st)


def random_search(
    space: dict[str, list],
    trials: int,
    probe_epochs: int,
    seed: int,
    train_set: list[SentenceMatrix],
    test_set: list[SentenceMatrix],
    classes: list[str],
    base_config: ModelConfig,
    base_settings: TrainSettings = TrainSettings(),
    log=None,
):
    """Walk the Cartesian product of the subsets in seeded-shuffled order,
    probe-train each candidate, and return the accuracy argmax (ties go to
    the earliest trial).

    Keys name :class:`ModelConfig` fields or optimizer settings; returns
    (best_config, best_settings, trial log).
    """
    if not space or any(len(v) == 0 for v in space.values()):
        raise ValueError("empty search space")
    keys = sorted(space)
    sizes = [len(space[k]) for k in keys]
    total = int(np.prod(sizes))
    if trials > total:
        raise ValueError(f"{trials} trials exceed the product size {total}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5EA8])))
    order = rng.permutation(total)[:trials]

    results = []
    best = None
    for t, flat in enumerate(order):
        choice = {}
        rem = int(flat)
        for k, size in zip(keys, sizes):
            choice[k] = space[k][rem % size]
            rem //= size
        config, settings = _apply_choice(base_config, base_settings, choice)
        settings = replace(settings, epochs=probe_epochs)
        config = replace(config, seed=int(seed))
        _, rep = train(train_set, test_set, classes, config, settings)
        acc = rep.final_accuracy
        results.append({"trial": t, "choice": choice, "accuracy": acc})
        if log is not None:
            log(t, choice, acc)
        if best is None or acc > best[0]:
            best = (acc, config, settings)
    return best[1], best[2], results
