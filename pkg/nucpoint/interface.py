'''
File: interface.py
Project: nucpoint
File Created: Monday, 2nd March 2026 10:12:41 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Thursday, 12th March 2026 9:05:18 am
Modified By: koko (koko231125@gmail.com>)
'''


from typing import Protocol, runtime_checkable, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from nucpoint.impl.base import ParamSet
    from nucpoint.encoder import FeatureMap


"""Differentiable Building Blocks

Define the protocol for every object that takes part in a forward/backward pass. 
"""


@runtime_checkable
class Layer(Protocol):
    r"""Layer protocol represents a differentiable operation with an explicit cache. 

    A call to `forward` stores whatever the matching `backward` needs. `backward` consumes the 
    upstream gradient, accumulates parameter gradients into `params` and returns the gradient with 
    respect to the input.

    Attributes:
        params (ParamSet): 
            The trainable parameters of the layer. Empty for parameter-free layers.

    Methods:
        forward(x: np.ndarray) -> np.ndarray:
            Compute the layer output and cache the forward state.
        infer(x: np.ndarray) -> np.ndarray:
            Compute the same output without touching any state.
        backward(grad: np.ndarray) -> np.ndarray:
            Return the input gradient and accumulate the parameter gradients.
    """
    params: 'ParamSet'

    def forward(self, x: np.ndarray) -> np.ndarray:
        pass

    def infer(self, x: np.ndarray) -> np.ndarray:
        pass

    def backward(self, grad: np.ndarray) -> np.ndarray:
        pass


@runtime_checkable
class Model(Protocol):
    r"""Model protocol represents anything that owns a ParamSet and can be saved to a checkpoint.

    Attributes:
        params (ParamSet): 
            All trainable parameters of the model, names unique.
        meta (dict[str, object]): 
            JSON serialisable architecture description needed to rebuild the model.
    """
    params: 'ParamSet'
    meta: dict[str, object]


"""Task Level Models

Define the protocol for the two halves of the decoupled pipeline.
"""


@runtime_checkable
class FeatureEncoder(Model, Protocol):
    r"""FeatureEncoder protocol represents the feature extractor that turns an image into a
    feature map queried at nucleus coordinates.

    Attributes:
        stride (int): 
            The spatial stride between image pixels and feature cells.
        channels (int): 
            The feature dimension C'.
        frozen (bool): 
            When True the weights must be bit-identical before and after any downstream training.

    Methods:
        encode(image: np.ndarray) -> FeatureMap:
            Encode one [3, H, W] image.
        forward(images: np.ndarray) -> np.ndarray:
            Encode a [N, 3, H, W] batch into [N, C', H', W'] and cache for backward.
        infer(images: np.ndarray) -> np.ndarray:
            Same as forward without caching, safe to call concurrently.
        backward(grad: np.ndarray) -> np.ndarray:
            Backpropagate a feature gradient and accumulate parameter gradients.
    """
    stride: int
    channels: int
    frozen: bool

    def encode(self, image: np.ndarray) -> 'FeatureMap':
        pass

    def forward(self, images: np.ndarray) -> np.ndarray:
        pass

    def infer(self, images: np.ndarray) -> np.ndarray:
        pass

    def backward(self, grad: np.ndarray) -> np.ndarray:
        pass


@runtime_checkable
class PointDetector(Model, Protocol):
    r"""PointDetector protocol represents the single-stage grid point detector.

    Attributes:
        stride (int): 
            The grid stride in pixels.

    Methods:
        forward(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            Return score logits [N, H', W'] and stride-normalized offsets [N, 2, H', W'].
        infer(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            Same as forward without caching.
        backward(grad_logits: np.ndarray, grad_offsets: np.ndarray) -> None:
            Backpropagate the head gradients into the parameters.
    """
    stride: int

    def forward(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pass

    def infer(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pass

    def backward(self, grad_logits: np.ndarray, grad_offsets: np.ndarray) -> None:
        pass
