'''
File: functional.py
Project: impl
File Created: Monday, 2nd March 2026 2:48:10 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Friday, 13th March 2026 11:21:44 am
Modified By: koko (koko231125@gmail.com>)
'''


import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from nucpoint.errors import ShapeError


# Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before any logarithm
PROB_EPS: float = 1e-7


"""Convolution
"""


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _check_conv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, pad: int) -> None:
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [C,H,W] or [N,C,H,W] input, got shape {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv2d expects a square [C_out,C_in,k,k] weight, got {weight.shape}")
    k = weight.shape[2]
    if k % 2 == 0:
        raise ShapeError(f"conv2d kernel size must be odd, got {k}")
    if weight.shape[1] != x.shape[1]:
        raise ShapeError(f"weight expects {weight.shape[1]} input channels, input has {x.shape[1]}")
    if bias.shape != (weight.shape[0], ):
        raise ShapeError(f"bias must have shape ({weight.shape[0]},), got {bias.shape}")
    if stride < 1 or pad < 0:
        raise ShapeError(f"invalid stride {stride} or padding {pad}")
    if x.shape[2] + 2 * pad < k or x.shape[3] + 2 * pad < k:
        raise ShapeError(f"input {x.shape[2:]} with padding {pad} is smaller than the kernel {k}")


def _windows(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    # [N, C, H', W', k, k] read-only view over the padded input
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    pad: int = 0,
) -> np.ndarray:
    r"""Direct 2D cross-correlation with zero padding.

    Args:
        x (np.ndarray):
            Input of shape [C_in, H, W] or [N, C_in, H, W].
        weight (np.ndarray):
            Kernel of shape [C_out, C_in, k, k], k odd.
        bias (np.ndarray):
            Bias of shape [C_out].
        stride (int, optional):
            The step between two output positions. Defaults to 1.
        pad (int, optional):
            Zero padding on every border. Defaults to 0.

    Returns:
        np.ndarray:
            Output of shape [C_out, H', W'] (or [N, C_out, H', W'] for batched input), with
            H' = (H + 2·pad − k) // stride + 1.

    Raises:
        ShapeError:
            If the shapes of input, weight and bias do not agree.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    _check_conv(x, weight, bias, stride, pad)

    win = _windows(x, weight.shape[2], stride, pad)
    # [N, H', W', C_out] -> [N, C_out, H', W']
    out = np.tensordot(win, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias[None, :, None, None]
    return out[0] if single else np.ascontiguousarray(out)


def conv2d_backward(
    x: np.ndarray,
    weight: np.ndarray,
    grad: np.ndarray,
    stride: int = 1,
    pad: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r"""Exact gradients of `conv2d`.

    Args:
        x (np.ndarray):
            The forward input [N, C_in, H, W].
        weight (np.ndarray):
            The forward kernel [C_out, C_in, k, k].
        grad (np.ndarray):
            The upstream gradient [N, C_out, H', W'].
        stride (int, optional):
            Defaults to 1.
        pad (int, optional):
            Defaults to 0.

    Returns:
        tuple[np.ndarray, np.ndarray, np.ndarray]:
            Gradients with respect to input, weight and bias.
    """
    n, c, h, w = x.shape
    k = weight.shape[2]
    win = _windows(x, k, stride, pad)
    h_out, w_out = conv_output_size(h, k, stride, pad), conv_output_size(w, k, stride, pad)
    if grad.shape != (n, weight.shape[0], h_out, w_out):
        raise ShapeError(f"upstream gradient {grad.shape} does not match output {(n, weight.shape[0], h_out, w_out)}")

    grad_w = np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3]))
    grad_b = grad.sum(axis=(0, 2, 3))

    # [N, H', W', C_in, k, k]
    grad_win = np.tensordot(grad, weight, axes=([1], [0]))
    grad_xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(k):
        for j in range(k):
            grad_xp[:, :, i:i + stride * (h_out - 1) + 1:stride, j:j + stride * (w_out - 1) + 1:stride] += \
                grad_win[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    grad_x = grad_xp[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(grad_x), grad_w, grad_b


"""Activations and Losses
"""


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign so that exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    r"""Mean softmax cross entropy over a batch.

    Args:
        logits (np.ndarray):
            Unnormalised scores [N, C].
        labels (np.ndarray):
            0-based integer labels [N], each in [0, C).

    Returns:
        tuple[float, np.ndarray]:
            The mean loss and its gradient (softmax − onehot) / N with respect to the logits. An
            empty batch gives loss 0 and an empty gradient.

    Raises:
        ShapeError:
            If the logits are not 2D or the label count differs from N.
        ValueError:
            If a label is outside [0, C).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0], ):
        raise ShapeError(f"logits {logits.shape} and labels {labels.shape} do not agree")
    n, num_classes = logits.shape
    if n == 0:
        return 0.0, np.zeros_like(logits)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")

    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_prob = z[np.arange(n), labels] - log_norm
    loss = float(-log_prob.mean())

    grad = np.exp(z - log_norm[:, None])
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def _check_targets(targets: np.ndarray) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.float64)
    if not np.all((targets == 0.0) | (targets == 1.0)):
        raise ValueError("binary targets must be 0 or 1")
    return targets


def binary_cross_entropy(scores: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    r"""Mean binary cross entropy on probabilities, clamped into [1e-7, 1 − 1e-7].

    Args:
        scores (np.ndarray):
            Probabilities of any shape.
        targets (np.ndarray):
            Targets in {0, 1} with the same shape.

    Returns:
        tuple[float, np.ndarray]:
            The mean loss and its gradient with respect to the scores. Entries held by the clamp
            have zero gradient.

    Raises:
        ShapeError:
            If the shapes differ.
        ValueError:
            If a target is not 0 or 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = _check_targets(targets)
    if scores.shape != targets.shape:
        raise ShapeError(f"scores {scores.shape} and targets {targets.shape} do not agree")
    if scores.size == 0:
        return 0.0, np.zeros_like(scores)

    s = np.clip(scores, PROB_EPS, 1.0 - PROB_EPS)
    loss = float(np.mean(-(targets * np.log(s) + (1.0 - targets) * np.log(1.0 - s))))
    grad = (-targets / s + (1.0 - targets) / (1.0 - s)) / scores.size
    grad[(scores <= PROB_EPS) | (scores >= 1.0 - PROB_EPS)] = 0.0
    return loss, grad


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Sigmoid followed by `binary_cross_entropy`, differentiated with respect to the logits.

    Args:
        logits (np.ndarray):
            Raw scores of any shape.
        targets (np.ndarray):
            Targets in {0, 1} with the same shape.

    Returns:
        tuple[float, np.ndarray]:
            The mean loss and its gradient with respect to the logits.
    """
    s = sigmoid(logits)
    loss, grad_s = binary_cross_entropy(s, targets)
    return loss, grad_s * s * (1.0 - s)


def l2_point_loss(
    pred_points: np.ndarray,
    target_points: np.ndarray,
    scale: float = 1.0,
) -> tuple[float, np.ndarray]:
    r"""Mean squared Euclidean distance between paired points, measured in units of `scale`.

    Args:
        pred_points (np.ndarray):
            Predicted points [M, 2].
        target_points (np.ndarray):
            Target points [M, 2], paired row by row with the predictions.
        scale (float, optional):
            The length unit, the grid stride for offset regression. Defaults to 1.0.

    Returns:
        tuple[float, np.ndarray]:
            The loss and its gradient [M, 2] with respect to the predicted points. No pairs gives
            loss 0.

    Raises:
        ShapeError:
            If the two lists have different lengths.
    """
    pred = np.asarray(pred_points, dtype=np.float64).reshape(-1, 2)
    target = np.asarray(target_points, dtype=np.float64).reshape(-1, 2)
    if pred.shape != target.shape:
        raise ShapeError(f"{len(pred)} predicted points paired with {len(target)} targets")
    m = len(pred)
    if m == 0:
        return 0.0, np.zeros_like(pred)

    diff = (pred - target) / scale
    loss = float(np.sum(diff ** 2) / m)
    grad = 2.0 * diff / (scale * m)
    return loss, grad


"""Bilinear Sampling
"""


def bilinear_weights(
    points: np.ndarray,
    height: int,
    width: int,
    stride: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r"""Flat cell indices and weights of the bilinear blend used by feature queries.

    Cell (i, j) sits at image location ((j + 0.5)·stride, (i + 0.5)·stride). A point (x, y) maps
    to u = x / stride − 0.5, v = y / stride − 0.5, clamped to the grid border.

    Args:
        points (np.ndarray):
            Query points [K, 2] as (x, y) pixels.
        height (int):
            Feature map height H'.
        width (int):
            Feature map width W'.
        stride (float):
            Feature stride.

    Returns:
        tuple[np.ndarray, np.ndarray, np.ndarray]:
            Row indices [K, 4], column indices [K, 4] and weights [K, 4] ordered as
            (top-left, top-right, bottom-left, bottom-right).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    u = np.clip(points[:, 0] / stride - 0.5, 0.0, width - 1)
    v = np.clip(points[:, 1] / stride - 0.5, 0.0, height - 1)
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    j1 = np.minimum(j0 + 1, width - 1)
    i1 = np.minimum(i0 + 1, height - 1)
    a = u - j0
    b = v - i0

    rows = np.stack([i0, i0, i1, i1], axis=1)
    cols = np.stack([j0, j1, j0, j1], axis=1)
    weights = np.stack([(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b], axis=1)
    return rows, cols, weights


def bilinear_gather(values: np.ndarray, rows: np.ndarray, cols: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Blend [C, H', W'] values at precomputed taps into [K, C] vectors."""
    taps = values[:, rows, cols]            # [C, K, 4]
    return np.einsum('ckt,kt->kc', taps, weights)
