'''
File: optim.py
Project: impl
File Created: Tuesday, 3rd March 2026 9:40:55 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Tuesday, 3rd March 2026 9:40:55 am
Modified By: koko (koko231125@gmail.com>)
'''


import math

from nucpoint.impl.base import ParamSet


def sgd_step(params: ParamSet, lr: float, momentum: float = 0.9) -> ParamSet:
    r"""One SGD step with heavy-ball momentum, applied in place to every entry.

        v <- momentum * v + g
        w <- w - lr * v

    Args:
        params (ParamSet):
            The parameters with accumulated gradients.
        lr (float):
            The learning rate, strictly positive.
        momentum (float, optional):
            The momentum coefficient in [0, 1). Defaults to 0.9.

    Returns:
        ParamSet:
            The same set, updated.
    """
    assert lr > 0, ValueError(f"learning rate must be positive, got {lr}")
    assert 0.0 <= momentum < 1.0, ValueError(f"momentum must lie in [0, 1), got {momentum}")
    for _, param in params:
        param.momentum *= momentum
        param.momentum += param.grad
        param.weight -= lr * param.momentum
    return params


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """Cosine decay from `base_lr` at epoch 0 towards zero at `total_epochs`."""
    if total_epochs <= 0:
        return base_lr
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))
