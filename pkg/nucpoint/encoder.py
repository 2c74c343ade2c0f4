'''
File: encoder.py
Project: nucpoint
File Created: Wednesday, 4th March 2026 5:37:12 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import logging
import math
from dataclasses import dataclass

import numpy as np

import nucpoint.interface as ifc
import nucpoint.impl.functional as F
import nucpoint.utils as utils
from nucpoint.config import EncoderConfig
from nucpoint.errors import ShapeError
from nucpoint.impl.base import Linear, ParamSet, conv_stack
from nucpoint.impl.optim import cosine_lr, sgd_step
from nucpoint.rtypes import EncoderKind
from nucpoint.synthdata import Sample


logger = logging.getLogger(__name__)


@dataclass
class FeatureMap:
    r"""Encoder output of one image.

    Attributes:
        values (np.ndarray):
            [C', H', W'] features.
        stride (int):
            Pixels per feature cell, H' = H / stride.
    """
    values: np.ndarray
    stride: int

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


"""Encoder
"""


class ConvEncoder:
    r"""Convolutional feature extractor with a power-of-two stride.

    The stack is one stride-1 convolution followed by log2(stride) stride-2 convolutions and a
    final stride-1 projection to `channels`, every convolution followed by a ReLU. Images are
    centred by subtracting 0.5.

    Attributes:
        channels (int):
            Feature dimension C'.
        width (int):
            Hidden channel count.
        stride (int):
            Pixels per feature cell.
        kind (EncoderKind):
            How the weights came to be.
        frozen (bool):
            Whether downstream training may update the weights.
        params (ParamSet):
            All weights.
    """
    channels: int
    width: int
    stride: int
    kind: EncoderKind
    frozen: bool
    params: ParamSet

    def __init__(
        self,
        channels: int = 32,
        width: int = 16,
        stride: int = 4,
        kind: EncoderKind = EncoderKind.RANDOM_FROZEN,
        frozen: bool = True,
        seed: int = 0,
    ) -> None:
        assert isinstance(kind, EncoderKind), TypeError(f"kind must be an EncoderKind, got {type(kind)}")
        assert stride > 0 and stride & (stride - 1) == 0, ShapeError(f"stride must be a power of two, got {stride}")
        self.channels = channels
        self.width = width
        self.stride = stride
        self.kind = kind
        self.frozen = frozen
        self.seed = seed

        downsample = int(round(math.log2(stride)))
        widths = [width] * (1 + downsample) + [channels]
        strides = [1] + [2] * downsample + [1]
        self.net = conv_stack(3, widths, strides, utils.make_rng(seed, 11))
        self.params = self.net.params

    def __repr__(self) -> str:
        return f'ConvEncoder({self.kind.value}, C={self.channels}, stride={self.stride}, frozen={self.frozen})'

    @property
    def meta(self) -> dict[str, object]:
        return {
            'model': 'encoder',
            'channels': self.channels,
            'width': self.width,
            'stride': self.stride,
            'kind': self.kind.value,
            'frozen': self.frozen,
        }

    def _check(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 4 or images.shape[1] != 3:
            raise ShapeError(f"encoder expects [N, 3, H, W] images, got {images.shape}")
        if images.shape[2] % self.stride or images.shape[3] % self.stride:
            raise ShapeError(f"image size {images.shape[2:]} is not divisible by the stride {self.stride}")
        return images - 0.5

    def forward(self, images: np.ndarray) -> np.ndarray:
        return self.net.forward(self._check(images))

    def infer(self, images: np.ndarray) -> np.ndarray:
        return self.net.infer(self._check(images))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return self.net.backward(grad)

    def encode(self, image: np.ndarray) -> FeatureMap:
        return FeatureMap(self.infer(np.asarray(image)[None])[0], self.stride)

    def copy(self, kind: EncoderKind | None = None, frozen: bool | None = None) -> 'ConvEncoder':
        """An independent encoder with the same weights."""
        other = ConvEncoder(
            self.channels, self.width, self.stride,
            self.kind if kind is None else kind,
            self.frozen if frozen is None else frozen,
            self.seed,
        )
        other.params.load_state_dict(self.params.state_dict())
        return other


def encode(encoder: ifc.FeatureEncoder, image: np.ndarray) -> FeatureMap:
    """Encode one [3, H, W] image, H and W divisible by the encoder stride."""
    return encoder.encode(image)


"""Bilinear Sampling
"""


def bilinear_sample(fmap: FeatureMap, point: tuple[float, float] | np.ndarray) -> np.ndarray:
    r"""Query a feature vector at an image coordinate.

    With u = x / stride - 0.5 and v = y / stride - 0.5 the result blends the four surrounding
    cells, coordinates clamped to the border. A query at a cell center returns that cell exactly.

    Args:
        fmap (FeatureMap):
            The feature map.
        point (tuple[float, float] | np.ndarray):
            (x, y) in pixels.

    Returns:
        np.ndarray:
            The [C'] feature vector.
    """
    return sample_points(fmap, np.asarray(point, dtype=np.float64).reshape(1, 2))[0]


def sample_points(fmap: FeatureMap, points: np.ndarray) -> np.ndarray:
    """`bilinear_sample` for [K, 2] points, returning [K, C']."""
    _, h, w = fmap.shape
    rows, cols, weights = F.bilinear_weights(points, h, w, fmap.stride)
    return F.bilinear_gather(fmap.values, rows, cols, weights)


@dataclass
class SampleTaps:
    r"""Bilinear taps of points spread over a batch of feature maps, kept for the backward pass."""
    image_index: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    shape: tuple[int, int, int, int]


def sample_batch(
    maps: np.ndarray,
    image_index: np.ndarray,
    points: np.ndarray,
    stride: int,
) -> tuple[np.ndarray, SampleTaps]:
    """Sample [M, 2] points from a [N, C', H', W'] batch, point m from map `image_index[m]`.

    Returns:
        tuple[np.ndarray, SampleTaps]:
            [M, C'] features and the taps needed by `sample_batch_backward`.
    """
    image_index = np.asarray(image_index, dtype=np.int64).reshape(-1)
    _, _, h, w = maps.shape
    rows, cols, weights = F.bilinear_weights(points, h, w, stride)
    taps = maps[image_index[:, None], :, rows, cols]        # [M, 4, C']
    features = np.einsum('mtc,mt->mc', taps, weights)
    return features, SampleTaps(image_index, rows, cols, weights, maps.shape)


def sample_batch_backward(grad: np.ndarray, taps: SampleTaps) -> np.ndarray:
    """Spread [M, C'] feature gradients back onto the [N, C', H', W'] batch."""
    out = np.zeros(taps.shape)
    contrib = grad[:, None, :] * taps.weights[:, :, None]
    np.add.at(out, (taps.image_index[:, None], slice(None), taps.rows, taps.cols), contrib)
    return out


"""Pretext Pretraining
"""


def crop_around(sample: Sample, crop: int) -> tuple[np.ndarray, np.ndarray]:
    r"""Square crops centred on every annotated point, shifted to stay inside the image.

    Args:
        sample (Sample):
            An annotated image.
        crop (int):
            The crop side in pixels.

    Returns:
        tuple[np.ndarray, np.ndarray]:
            Crops [K, 3, crop, crop] and the annotated points in crop coordinates [K, 2].
    """
    _, h, w = sample.image.shape
    if crop > min(h, w):
        raise ShapeError(f"crop {crop} does not fit into a {h}x{w} image")
    crops = np.empty((len(sample.points), 3, crop, crop))
    local = np.empty((len(sample.points), 2))
    for k, (x, y) in enumerate(sample.points):
        left = int(np.clip(round(x) - crop // 2, 0, w - crop))
        top = int(np.clip(round(y) - crop // 2, 0, h - crop))
        crops[k] = sample.image[:, top:top + crop, left:left + crop]
        local[k] = (x - left, y - top)
    return crops, local


def pretrain_encoder(samples: list[Sample], config: EncoderConfig, num_classes: int, seed: int = 0) -> ConvEncoder:
    r"""Train an encoder on the crop classification pretext task and freeze it.

    A crop around every ground truth point is encoded, the crop's point is sampled bilinearly
    and a temporary linear head predicts the class. The head is discarded afterwards.

    Args:
        samples (list[Sample]):
            Annotated training images.
        config (EncoderConfig):
            Architecture and pretraining schedule.
        num_classes (int):
            The class count C.
        seed (int, optional):
            Seed of initial weights and crop order. Defaults to 0.

    Returns:
        ConvEncoder:
            A frozen encoder of kind `pretext-pretrained`.
    """
    encoder = ConvEncoder(config.channels, config.width, config.stride, EncoderKind.TRAINABLE, False, seed)
    head = Linear(config.channels, num_classes, utils.make_rng(seed, 12))
    params = ParamSet().merge('encoder', encoder.params).merge('head', head.params)

    crops, points, labels = [], [], []
    for sample in samples:
        if len(sample.points) == 0:
            continue
        c, p = crop_around(sample, config.crop)
        crops.append(c)
        points.append(p)
        labels.append(sample.labels - 1)
    if not crops:
        logger.warning("no annotated nuclei to pretrain on, returning a randomly initialised encoder")
        return encoder.copy(EncoderKind.PRETEXT_PRETRAINED, True)
    crops = np.concatenate(crops)
    points = np.concatenate(points)
    labels = np.concatenate(labels)

    rng = utils.make_rng(seed, 13)
    for epoch in range(config.pretrain_epochs):
        lr = cosine_lr(config.pretrain_lr, epoch, config.pretrain_epochs)
        order = rng.permutation(len(crops))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.pretrain_batch):
            idx = order[start:start + config.pretrain_batch]
            params.zero_grad()
            maps = encoder.forward(crops[idx])
            feats, taps = sample_batch(maps, np.arange(len(idx)), points[idx], encoder.stride)
            loss, grad_logits = F.softmax_cross_entropy(head.forward(feats), labels[idx])
            encoder.backward(sample_batch_backward(head.backward(grad_logits), taps))
            sgd_step(params, lr, config.momentum)
            total += loss
            batches += 1
        logger.info("pretrain epoch %d/%d loss %.4f", epoch + 1, config.pretrain_epochs, total / max(batches, 1))

    return encoder.copy(EncoderKind.PRETEXT_PRETRAINED, True)
