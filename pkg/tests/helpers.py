'''
File: helpers.py
Project: nucpoint
File Created: Monday, 9th March 2026 10:40:12 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


from typing import Callable, Sequence

import numpy as np

from nucpoint.impl.base import Conv2d, ReLU


def finite_difference(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of `x`, perturbing `x` in place."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        plus = f()
        x[idx] = old - eps
        minus = f()
        x[idx] = old
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-8)
    return float(np.max(np.abs(a - b))) / scale


def naive_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int) -> np.ndarray:
    c_in, h, width = x.shape
    c_out, _, k, _ = w.shape
    xp = np.zeros((c_in, h + 2 * pad, width + 2 * pad))
    xp[:, pad:pad + h, pad:pad + width] = x
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (width + 2 * pad - k) // stride + 1
    out = np.zeros((c_out, h_out, w_out))
    for o in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                total = b[o]
                for c in range(c_in):
                    for di in range(k):
                        for dj in range(k):
                            total += xp[c, i * stride + di, j * stride + dj] * w[o, c, di, dj]
                out[o, i, j] = total
    return out


def naive_forward(layers: Sequence[object], x: np.ndarray) -> np.ndarray:
    """Run [C, H, W] through Conv2d and ReLU layers one at a time with the loop convolution."""
    for layer in layers:
        if isinstance(layer, Conv2d):
            x = naive_conv(x, layer.weight.weight, layer.bias.weight, layer.stride, layer.pad)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        else:
            raise TypeError(f"no loop version of {layer!r}")
    return x
