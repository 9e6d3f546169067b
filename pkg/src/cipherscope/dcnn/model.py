"""Model configuration, parameter tensors, and the full forward/backward pass.

Layer l (1-based) applies: wide convolution -> folding (where scheduled) ->
dynamic k-max pooling -> tanh, with dropout after the first pooling stage in
training mode only.  A final linear map plus softmax produces class
probabilities.  The k-max schedule makes the flattened size independent of
the input length, which is what lets variable-length traces share one set of
weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import layers
from .layers import (
    cross_entropy,
    dropout,
    dropout_backward,
    dynamic_k,
    fold,
    fold_backward,
    kmax_pool,
    kmax_pool_backward,
    softmax,
    tanh,
    tanh_backward,
    wide_conv,
    wide_conv_backward,
)


class ConfigError(ValueError):
    """A model configuration that cannot be instantiated."""


def _normalize_folds(folds) -> tuple[tuple[int, int], ...]:
    """Accept {layer: count}, iterables with repeats, or pair tuples."""
    if isinstance(folds, dict):
        items = folds.items()
    else:
        counted: dict[int, int] = {}
        for entry in folds:
            if isinstance(entry, tuple):
                counted[entry[0]] = counted.get(entry[0], 0) + entry[1]
            else:
                counted[entry] = counted.get(entry, 0) + 1
        items = counted.items()
    return tuple(sorted((int(l), int(c)) for l, c in items if c))


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    filter_widths: tuple[int, ...]
    feature_maps: tuple[int, ...]
    k_top: int
    dropout_p: float
    classes: int
    fold_layers: tuple[tuple[int, int], ...] = ()
    seed: int = 0
    input_transform: str = "log1p"  # tames count*entropy magnitudes pre-tanh

    def folds_at(self, layer: int) -> int:
        for l, c in self.fold_layers:
            if l == layer:
                return c
        return 0

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "filter_widths": list(self.filter_widths),
            "feature_maps": list(self.feature_maps),
            "k_top": self.k_top,
            "dropout_p": self.dropout_p,
            "classes": self.classes,
            "fold_layers": [list(x) for x in self.fold_layers],
            "seed": self.seed,
            "input_transform": self.input_transform,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(
            num_layers=int(d["num_layers"]),
            filter_widths=tuple(int(x) for x in d["filter_widths"]),
            feature_maps=tuple(int(x) for x in d["feature_maps"]),
            k_top=int(d["k_top"]),
            dropout_p=float(d["dropout_p"]),
            classes=int(d["classes"]),
            fold_layers=_normalize_folds(d.get("fold_layers", [])),
            seed=int(d.get("seed", 0)),
            input_transform=str(d.get("input_transform", "log1p")),
        )


def validate_config(config: ModelConfig, d: int) -> dict:
    """Shape algebra check; raises :class:`ConfigError` with every violation
    or returns the derived sizes (per-layer input rows and the FC width)."""
    faults: list[str] = []
    L = config.num_layers
    if L < 1:
        faults.append("need at least one layer")
    if len(config.filter_widths) != L:
        faults.append(f"{len(config.filter_widths)} filter widths for {L} layers")
    if len(config.feature_maps) != L:
        faults.append(f"{len(config.feature_maps)} feature map counts for {L} layers")
    if any(w < 1 for w in config.filter_widths):
        faults.append("every filter width must be >= 1")
    if any(m < 1 for m in config.feature_maps):
        faults.append("every feature map count must be >= 1")
    if config.k_top < 1:
        faults.append("k_top must be >= 1")
    if not 0.0 <= config.dropout_p < 1.0:
        faults.append("dropout probability must lie in [0, 1)")
    if config.classes < 2:
        faults.append("need at least two classes")
    if config.input_transform not in ("log1p", "none"):
        faults.append(f"unknown input transform '{config.input_transform}'")
    for l, c in config.fold_layers:
        if not 1 <= l <= max(L, 1):
            faults.append(f"fold at layer {l} outside 1..{L}")
        if c < 1:
            faults.append(f"fold count {c} at layer {l}")
    if faults:
        raise ConfigError("; ".join(faults))

    rows_in = []
    rows = d
    for l in range(1, L + 1):
        rows_in.append(rows)
        for _ in range(config.folds_at(l)):
            if rows % 2:
                raise ConfigError(
                    f"fold at layer {l} needs an even row count, have {rows}"
                )
            rows //= 2
    if rows < 1:
        raise ConfigError("row count folded away to nothing")
    fc_in = config.feature_maps[-1] * rows * config.k_top
    return {"rows_in": rows_in, "rows_out": rows, "fc_in": fc_in}


@dataclass
class ModelParams:
    kernels: list[np.ndarray]  # per layer: (maps_out, maps_in, rows, m)
    biases: list[np.ndarray]   # per layer: (maps_out, rows)
    fc_w: np.ndarray           # (classes, fc_in)
    fc_b: np.ndarray           # (classes,)

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            out.append((f"conv{i}.kernel", k))
            out.append((f"conv{i}.bias", b))
        out.append(("fc.weight", self.fc_w))
        out.append(("fc.bias", self.fc_b))
        return out


def init_params(config: ModelConfig, d: int,
                rng: np.random.Generator | None = None) -> ModelParams:
    """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)) per tensor."""
    shapes = validate_config(config, d)
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 0x171])))
    kernels, biases = [], []
    maps_in = 1
    for l in range(1, config.num_layers + 1):
        maps_out = config.feature_maps[l - 1]
        m = config.filter_widths[l - 1]
        rows = shapes["rows_in"][l - 1]
        bound = np.sqrt(6.0 / (maps_in * m + maps_out * m))
        kernels.append(rng.uniform(-bound, bound, size=(maps_out, maps_in, rows, m)))
        biases.append(rng.uniform(-bound, bound, size=(maps_out, rows)))
        maps_in = maps_out
    bound = np.sqrt(6.0 / (shapes["fc_in"] + config.classes))
    fc_w = rng.uniform(-bound, bound, size=(config.classes, shapes["fc_in"]))
    fc_b = rng.uniform(-bound, bound, size=(config.classes,))
    return ModelParams(kernels, biases, fc_w, fc_b)


def forward(params: ModelParams, config: ModelConfig, x: np.ndarray,
            train_mode: bool = False, rng: np.random.Generator | None = None):
    """Class probabilities for one d x s sentence matrix.

    Returns (probs, cache); the cache feeds :func:`backward`.  ``rng`` is
    required in training mode when dropout_p > 0.
    """
    L = config.num_layers
    s_orig = x.shape[1]
    a = x[None, :, :].astype(np.float64)
    if config.input_transform == "log1p":
        a = np.log1p(a)
    layer_ctx = []
    for l in range(1, L + 1):
        z, conv_ctx = wide_conv(a, params.kernels[l - 1], params.biases[l - 1])
        folds = config.folds_at(l)
        fold_ctx = None
        if folds:
            z, fold_ctx = fold(z, folds)
        k = config.k_top if l == L else dynamic_k(l, L, s_orig, config.k_top)
        z, pool_ctx = kmax_pool(z, k)
        drop_mask = None
        if l == 1 and train_mode and config.dropout_p > 0.0:
            if rng is None:
                raise ValueError("training-mode forward needs an rng for dropout")
            z, drop_mask = dropout(z, config.dropout_p, rng)
        a, tanh_ctx = tanh(z)
        layer_ctx.append((conv_ctx, fold_ctx, pool_ctx, drop_mask, tanh_ctx))

    flat = a.reshape(-1)
    scores = params.fc_w @ flat + params.fc_b
    probs = softmax(scores)
    cache = (layer_ctx, flat, a.shape, probs)
    return probs, cache


@dataclass
class Grads:
    kernels: list[np.ndarray]
    biases: list[np.ndarray]
    fc_w: np.ndarray
    fc_b: np.ndarray

    def scale(self, f: float) -> None:
        for k in self.kernels:
            k *= f
        for b in self.biases:
            b *= f
        self.fc_w *= f
        self.fc_b *= f

    def add(self, other: "Grads") -> None:
        for a, b in zip(self.kernels, other.kernels):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b
        self.fc_w += other.fc_w
        self.fc_b += other.fc_b


def backward(params: ModelParams, config: ModelConfig, cache, target: int) -> tuple[float, Grads]:
    """Cross-entropy loss and gradients for every parameter tensor."""
    layer_ctx, flat, top_shape, probs = cache
    loss = cross_entropy(probs, target)

    dscores = probs.copy()
    dscores[target] -= 1.0
    dfc_w = np.outer(dscores, flat)
    dfc_b = dscores.copy()
    da = (params.fc_w.T @ dscores).reshape(top_shape)

    dkernels: list[np.ndarray] = [None] * config.num_layers
    dbiases: list[np.ndarray] = [None] * config.num_layers
    for l in range(config.num_layers, 0, -1):
        conv_ctx, fold_ctx, pool_ctx, drop_mask, tanh_ctx = layer_ctx[l - 1]
        dz = tanh_backward(tanh_ctx, da)
        if drop_mask is not None:
            dz = dropout_backward(drop_mask, dz)
        dz = kmax_pool_backward(pool_ctx, dz)
        if fold_ctx is not None:
            dz = fold_backward(fold_ctx, dz)
        da, dk, db = wide_conv_backward(conv_ctx, dz)
        dkernels[l - 1] = dk
        dbiases[l - 1] = db
    return loss, Grads(dkernels, dbiases, dfc_w, dfc_b)


def predict(params: ModelParams, config: ModelConfig, x: np.ndarray) -> np.ndarray:
    probs, _ = forward(params, config, x, train_mode=False)
    return probs


#: Desk-scale default: trains in minutes on one core.
DESK_PRESET = ModelConfig(
    num_layers=3,
    filter_widths=(7, 5, 5),
    feature_maps=(2, 2, 2),
    k_top=8,
    dropout_p=0.3,
    classes=6,
    fold_layers=((3, 1),),
)

#: The 14-convolution configuration: widths 20 / 10x12 / 12, two feature
#: maps first and last, double fold before the penultimate pooling, k_top 56,
#: dropout 0.6, 8 outputs.  Instantiates with d=12; kept for the shape check.
PAPER_PRESET = ModelConfig(
    num_layers=14,
    filter_widths=(20,) + (10,) * 12 + (12,),
    feature_maps=(2,) * 14,
    k_top=56,
    dropout_p=0.6,
    classes=8,
    fold_layers=((13, 2),),
)

PRESETS = {"desk": DESK_PRESET, "paper14": PAPER_PRESET}
