"""Network building blocks with hand-derived backward passes.

Conventions: activations are float64 arrays of shape (maps, rows, length).
Each forward function returns (output, ctx) where ctx carries exactly what
the matching backward function needs.  No autodiff anywhere.
"""

from __future__ import annotations

import math

import numpy as np


def dynamic_k(l: int, L: int, s: int, k_top: int) -> int:
    """Pooling size schedule: k_l = max(k_top, ceil((L - l) / L * s)).

    Monotonically non-increasing in the layer index l and pinned to k_top at
    the final layer.
    """
    if not 1 <= l <= L:
        raise ValueError(f"layer index {l} outside 1..{L}")
    if s < 1 or k_top < 1:
        raise ValueError("s and k_top must be positive")
    return max(k_top, math.ceil((L - l) * s / L))


# ---------------------------------------------------------------------------
# Wide (one-wide) convolution
# ---------------------------------------------------------------------------

def _row_windows(x: np.ndarray, m: int) -> np.ndarray:
    """Sliding windows of width m over the last axis of a zero-padded copy;
    output shape (..., n + m - 1, m) for input length n."""
    pad = np.zeros(x.shape[:-1] + (x.shape[-1] + 2 * (m - 1),), dtype=x.dtype)
    pad[..., m - 1 : m - 1 + x.shape[-1]] = x
    return np.lib.stride_tricks.sliding_window_view(pad, m, axis=-1)


def wide_conv(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray):
    """Full convolution along the sequence axis, one kernel row per matrix
    row, summed over input maps.

    x: (maps_in, rows, s); kernels: (maps_out, maps_in, rows, m);
    bias: (maps_out, rows).  Output: (maps_out, rows, s + m - 1), with
    positions beyond the input treated as zero.
    """
    m = kernels.shape[-1]
    if m == 1:
        out = np.einsum("irn,oir->orn", x, kernels[..., 0])
    else:
        windows = _row_windows(x, m)  # (maps_in, rows, s+m-1, m)
        out = np.einsum("irnm,oirm->orn", windows, kernels[..., ::-1])
    out += bias[:, :, None]
    return out, (x, kernels)


def wide_conv_backward(ctx, dout: np.ndarray):
    """Gradients of :func:`wide_conv`; returns (dx, dkernels, dbias)."""
    x, kernels = ctx
    m = kernels.shape[-1]
    dbias = dout.sum(axis=2)
    if m == 1:
        dk = np.einsum("orn,irn->oir", dout, x)[..., None]
        dx = np.einsum("orn,oir->irn", dout, kernels[..., 0])
        return dx, dk, dbias
    windows = _row_windows(x, m)
    # d/dkernel of the flipped product, flipped back at the end.
    dk = np.einsum("orn,irnm->oirm", dout, windows)[..., ::-1]
    # dx[j] = sum_n dout[n] k[n - j]: a valid correlation over dout windows.
    dwin = np.lib.stride_tricks.sliding_window_view(dout, m, axis=-1)
    dx = np.einsum("orjm,oirm->irj", dwin, kernels)
    return dx, dk, dbias


# ---------------------------------------------------------------------------
# Folding
# ---------------------------------------------------------------------------

def fold(x: np.ndarray, times: int = 1):
    """Component-wise summation of adjacent row pairs, halving the row count
    per application; column count and total element sum are unchanged."""
    out = x
    for _ in range(times):
        if out.shape[1] % 2:
            raise ValueError(f"fold needs an even row count, got {out.shape[1]}")
        out = out.reshape(out.shape[0], out.shape[1] // 2, 2, out.shape[2]).sum(axis=2)
    return out, (x.shape, times)


def fold_backward(ctx, dout: np.ndarray) -> np.ndarray:
    shape, times = ctx
    dx = dout
    for _ in range(times):
        dx = np.repeat(dx, 2, axis=1)
    assert dx.shape == shape
    return dx


# ---------------------------------------------------------------------------
# k-max pooling
# ---------------------------------------------------------------------------

def kmax_pool(x: np.ndarray, k: int):
    """Per row, keep the k largest values in their original order (ties to
    the earlier index).  Rows shorter than k are padded with zeros at the
    tail; the pad count is reported in the ctx."""
    maps, rows, p = x.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if p >= k:
        order = np.argsort(-x, axis=-1, kind="stable")[:, :, :k]
        idx = np.sort(order, axis=-1)
        out = np.take_along_axis(x, idx, axis=-1)
        pad = 0
    else:
        pad = k - p
        out = np.concatenate([x, np.zeros((maps, rows, pad))], axis=-1)
        idx = np.concatenate(
            [
                np.broadcast_to(np.arange(p), (maps, rows, p)),
                np.full((maps, rows, pad), -1, dtype=np.int64),
            ],
            axis=-1,
        )
    return out, (idx, p, pad)


def kmax_pool_backward(ctx, dout: np.ndarray) -> np.ndarray:
    """Routes gradient only to the selected positions; padding gets none."""
    idx, p, pad = ctx
    maps, rows, k = dout.shape
    dx = np.zeros((maps, rows, p))
    if pad:
        valid = idx[:, :, : k - pad]
        np.put_along_axis(dx, valid, dout[:, :, : k - pad], axis=-1)
    else:
        np.put_along_axis(dx, idx, dout, axis=-1)
    return dx


# ---------------------------------------------------------------------------
# Pointwise pieces
# ---------------------------------------------------------------------------

def tanh(x: np.ndarray):
    out = np.tanh(x)
    return out, out


def tanh_backward(ctx, dout: np.ndarray) -> np.ndarray:
    return dout * (1.0 - ctx * ctx)


def dropout(x: np.ndarray, p: float, rng: np.random.Generator):
    """Inverted dropout: scale kept activations by 1/(1-p) at train time."""
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(mask: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * mask


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max()
    e = np.exp(z)
    return e / e.sum()


def cross_entropy(probs: np.ndarray, target: int) -> float:
    return float(-np.log(max(probs[target], 1e-300)))
