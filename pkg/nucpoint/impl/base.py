'''
File: base.py
Project: impl
File Created: Monday, 2nd March 2026 2:48:10 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Friday, 13th March 2026 5:02:37 pm
Modified By: koko (koko231125@gmail.com>)
'''


import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator

import numpy as np

import nucpoint.interface as ifc
import nucpoint.impl.functional as F
from nucpoint.errors import ShapeError, UsageError


"""Parameters
"""


@dataclass
class Param:
    r"""One trainable entry: weight, accumulated gradient and momentum buffer of equal shape."""
    weight: np.ndarray
    grad: np.ndarray
    momentum: np.ndarray

    @classmethod
    def of(cls, weight: np.ndarray) -> 'Param':
        weight = np.asarray(weight, dtype=np.float64)
        return cls(weight, np.zeros_like(weight), np.zeros_like(weight))


class ParamSet:
    r"""Ordered collection of named parameters.

    Entries are shared by reference, so a ParamSet built by merging the sets of several layers
    updates those layers in place when an optimizer steps it.

    Attributes:
        entries (dict[str, Param]):
            The parameters keyed by their unique name, in insertion order.
    """
    entries: dict[str, Param]

    def __init__(self) -> None:
        self.entries = {}

    def __repr__(self) -> str:
        return f'ParamSet({list(self.entries.keys())})'

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> Param:
        return self.entries[name]

    def __iter__(self) -> Iterator[tuple[str, Param]]:
        return iter(self.entries.items())

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, name: str, weight: np.ndarray | Param) -> Param:
        """Register a new parameter.

        Args:
            name (str):
                The unique name of the parameter.
            weight (np.ndarray | Param):
                A raw weight, or an existing Param to share.

        Returns:
            Param:
                The registered entry.

        Raises:
            KeyError:
                If the name is already taken.
        """
        if name in self.entries:
            raise KeyError(f'{name} is already registered in the parameter set')
        param = weight if isinstance(weight, Param) else Param.of(weight)
        self.entries[name] = param
        return param

    def merge(self, prefix: str, other: 'ParamSet') -> 'ParamSet':
        """Share every entry of `other` under `prefix.name`. Returns self for chaining."""
        for name, param in other:
            self.add(f'{prefix}.{name}', param)
        return self

    def zero_grad(self) -> None:
        for _, param in self:
            param.grad.fill(0.0)

    def num_weights(self) -> int:
        return int(sum(param.weight.size for _, param in self))

    def checksum(self) -> str:
        """SHA-256 over names, shapes and weight bytes in insertion order."""
        digest = hashlib.sha256()
        for name, param in self:
            digest.update(name.encode())
            digest.update(str(param.weight.shape).encode())
            digest.update(np.ascontiguousarray(param.weight).tobytes())
        return digest.hexdigest()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.weight.copy() for name, param in self}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copy weights into the existing entries, leaving gradients and momentum zeroed.

        Raises:
            KeyError:
                If the names of `state` and the set differ.
            ShapeError:
                If a stored weight has the wrong shape.
        """
        if set(state.keys()) != set(self.entries.keys()):
            missing = sorted(set(self.entries) - set(state))
            extra = sorted(set(state) - set(self.entries))
            raise KeyError(f'parameter names differ, missing {missing}, unexpected {extra}')
        for name, param in self:
            weight = np.asarray(state[name], dtype=np.float64)
            if weight.shape != param.weight.shape:
                raise ShapeError(f'{name}: stored shape {weight.shape} differs from {param.weight.shape}')
            param.weight[...] = weight
            param.grad.fill(0.0)
            param.momentum.fill(0.0)


"""Layers
"""


class BaseLayer(ABC, ifc.Layer):
    r"""BaseLayer is the abstract concrete implementation of the Layer protocol. It owns the
    forward cache and refuses a backward pass without one.

    Attributes:
        params (ParamSet):
            The trainable parameters of the layer.
    """
    params: ParamSet

    def __init__(self) -> None:
        self.params = ParamSet()
        self._cache = None

    def _pop_cache(self) -> object:
        if self._cache is None:
            raise UsageError(f'{self!r}: backward called without a cached forward pass')
        cache, self._cache = self._cache, None
        return cache

    @abstractmethod
    def __repr__(self) -> str:
        raise NotImplementedError("The `__repr__` method is not implemented")

    @abstractmethod
    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("The `forward` method is not implemented")

    @abstractmethod
    def infer(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError("The `infer` method is not implemented")

    @abstractmethod
    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError("The `backward` method is not implemented")


class Conv2d(BaseLayer):
    r"""Square-kernel convolution over [N, C, H, W] batches.

    Attributes:
        in_channels (int):
            Input channel count.
        out_channels (int):
            Output channel count.
        kernel (int):
            Odd kernel size.
        stride (int):
            Convolution stride.
        pad (int):
            Zero padding, `kernel // 2` by default so that stride 1 keeps the spatial size.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int = 3,
        stride: int = 1,
        pad: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        """Create a convolution with He-normal weights and zero bias.

        Args:
            in_channels (int):
                Input channel count.
            out_channels (int):
                Output channel count.
            kernel (int, optional):
                Odd kernel size. Defaults to 3.
            stride (int, optional):
                Defaults to 1.
            pad (int | None, optional):
                Defaults to kernel // 2.
            rng (np.random.Generator | None, optional):
                Source of the initial weights. Defaults to a generator seeded with 0.
        """
        super().__init__()
        assert isinstance(kernel, int) and kernel % 2 == 1, ShapeError(f"kernel must be odd, got {kernel}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad

        fan_in = in_channels * kernel * kernel
        self.weight = self.params.add(
            'weight', rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_channels, in_channels, kernel, kernel))
        )
        self.bias = self.params.add('bias', np.zeros(out_channels))

    def __repr__(self) -> str:
        return f'Conv2d({self.in_channels}, {self.out_channels}, k={self.kernel}, s={self.stride})'

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = self.infer(x)
        self._cache = x
        return out

    def infer(self, x: np.ndarray) -> np.ndarray:
        return F.conv2d(x, self.weight.weight, self.bias.weight, self.stride, self.pad)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._pop_cache()
        single = x.ndim == 3
        if single:
            x, grad = x[None], grad[None]
        grad_x, grad_w, grad_b = F.conv2d_backward(x, self.weight.weight, grad, self.stride, self.pad)
        self.weight.grad += grad_w
        self.bias.grad += grad_b
        return grad_x[0] if single else grad_x


class Linear(BaseLayer):
    r"""Fully connected layer y = x Wᵀ + b on [N, D_in] batches.

    Attributes:
        in_features (int):
            Input dimension.
        out_features (int):
            Output dimension.
    """

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None) -> None:
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.params.add(
            'weight', rng.normal(0.0, np.sqrt(1.0 / in_features), size=(out_features, in_features))
        )
        self.bias = self.params.add('bias', np.zeros(out_features))

    def __repr__(self) -> str:
        return f'Linear({self.in_features}, {self.out_features})'

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = self.infer(x)
        self._cache = x
        return out

    def infer(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f'{self!r} expects [N, {self.in_features}] input, got {x.shape}')
        return x @ self.weight.weight.T + self.bias.weight

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._pop_cache()
        if grad.shape != (x.shape[0], self.out_features):
            raise ShapeError(f'{self!r}: upstream gradient {grad.shape} does not match output')
        self.weight.grad += grad.T @ x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.weight


class ReLU(BaseLayer):
    """Rectified linear unit. The derivative at exactly 0 is taken as 0."""

    def __repr__(self) -> str:
        return 'ReLU()'

    def forward(self, x: np.ndarray) -> np.ndarray:
        mask = x > 0
        self._cache = mask
        return x * mask

    def infer(self, x: np.ndarray) -> np.ndarray:
        return x * (x > 0)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        mask = self._pop_cache()
        if grad.shape != mask.shape:
            raise ShapeError(f'ReLU: upstream gradient {grad.shape} does not match output {mask.shape}')
        return grad * mask


class Sequential(BaseLayer):
    r"""Chain of layers. Parameters are shared into one set named `<index>.<name>`.

    Attributes:
        layers (list[Layer]):
            The layers applied in order.
    """

    def __init__(self, *layers: ifc.Layer) -> None:
        super().__init__()
        for layer in layers:
            assert isinstance(layer, ifc.Layer), TypeError(f"{layer} is not a Layer")
        self.layers = list(layers)
        for index, layer in enumerate(self.layers):
            if len(layer.params):
                self.params.merge(str(index), layer.params)

    def __repr__(self) -> str:
        return f'Sequential({", ".join(repr(layer) for layer in self.layers)})'

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        self._cache = True
        return x

    def infer(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.infer(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self._pop_cache()
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def conv_stack(
    in_channels: int,
    channels: list[int],
    strides: list[int],
    rng: np.random.Generator,
) -> Sequential:
    """3x3 convolutions, each followed by a ReLU.

    Args:
        in_channels (int):
            Channels of the input image.
        channels (list[int]):
            Output channels of every convolution.
        strides (list[int]):
            Stride of every convolution, same length as `channels`.
        rng (np.random.Generator):
            Source of the initial weights.

    Returns:
        Sequential:
            The stack, with overall stride equal to the product of `strides`.
    """
    assert len(channels) == len(strides), ValueError("channels and strides differ in length")
    layers: list[ifc.Layer] = []
    previous = in_channels
    for out, stride in zip(channels, strides):
        layers.append(Conv2d(previous, out, 3, stride, rng=rng))
        layers.append(ReLU())
        previous = out
    return Sequential(*layers)


def layer_backward(layer: ifc.Layer, grad: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Run the backward pass of a layer whose forward state is cached and report the gradients
    produced by this call alone.

    Args:
        layer (Layer):
            A layer that just ran `forward`.
        grad (np.ndarray):
            The upstream gradient, shaped like the layer output.

    Returns:
        tuple[np.ndarray, dict[str, np.ndarray]]:
            The input gradient and the parameter gradients keyed by parameter name.

    Raises:
        UsageError:
            If the layer holds no forward cache.
    """
    before = {name: param.grad.copy() for name, param in layer.params}
    grad_x = layer.backward(grad)
    grads = {name: param.grad - before[name] for name, param in layer.params}
    return grad_x, grads
