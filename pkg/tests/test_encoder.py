'''
File: test_encoder.py
Project: nucpoint
File Created: Tuesday, 10th March 2026 3:30:19 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import numpy as np
import pytest

import nucpoint.interface as ifc
from nucpoint.config import EncoderConfig
from nucpoint.encoder import (
    ConvEncoder, FeatureMap, bilinear_sample, crop_around, encode, pretrain_encoder,
    sample_batch, sample_batch_backward, sample_points,
)
from nucpoint.errors import ShapeError
from nucpoint.factory import ModelFactory
from nucpoint.rtypes import EncoderKind
from nucpoint.synthdata import DataSplit, Sample
from tests.helpers import finite_difference, naive_forward, relative_error


def closed_form(values: np.ndarray, stride: int, x: float, y: float) -> np.ndarray:
    _, h, w = values.shape
    u = min(max(x / stride - 0.5, 0.0), w - 1)
    v = min(max(y / stride - 0.5, 0.0), h - 1)
    j0, i0 = int(np.floor(u)), int(np.floor(v))
    j1, i1 = min(j0 + 1, w - 1), min(i0 + 1, h - 1)
    a, b = u - j0, v - i0
    return ((1 - a) * (1 - b) * values[:, i0, j0] + a * (1 - b) * values[:, i0, j1]
            + (1 - a) * b * values[:, i1, j0] + a * b * values[:, i1, j1])


class TestEncode:

    def test_shapes(self) -> None:
        encoder = ConvEncoder(channels=6, width=4, stride=4)
        fmap = encode(encoder, np.zeros((3, 16, 24)))
        assert fmap.shape == (6, 4, 6)
        assert fmap.stride == 4

    def test_deterministic(self, rng: np.random.Generator) -> None:
        image = rng.uniform(size=(3, 16, 16))
        a = ConvEncoder(channels=4, width=4, seed=2).encode(image)
        b = ConvEncoder(channels=4, width=4, seed=2).encode(image)
        np.testing.assert_array_equal(a.values, b.values)

    def test_stride_must_divide(self) -> None:
        with pytest.raises(ShapeError):
            ConvEncoder(stride=4).encode(np.zeros((3, 10, 16)))

    def test_copy_is_independent(self) -> None:
        encoder = ConvEncoder(channels=4, width=4)
        other = encoder.copy(EncoderKind.TRAINABLE, False)
        assert other.params.checksum() == encoder.params.checksum()
        other.params['0.weight'].weight += 1.0
        assert other.params.checksum() != encoder.params.checksum()
        assert encoder.frozen and not other.frozen

    def test_factory_kinds(self) -> None:
        config = EncoderConfig(channels=4, width=4)
        factory = ModelFactory()
        assert factory.create_encoder(config, kind=EncoderKind.RANDOM_FROZEN).frozen
        assert not factory.create_encoder(config, kind=EncoderKind.TRAINABLE).frozen
        assert isinstance(factory.create_encoder(config), ifc.FeatureEncoder)

    def test_encode_is_the_layer_composition(self, rng: np.random.Generator) -> None:
        encoder = ConvEncoder(channels=3, width=2, stride=2, seed=6)
        image = rng.uniform(size=(3, 8, 8))
        fmap = encode(encoder, image)
        expected = naive_forward(encoder.net.layers, image - 0.5)
        np.testing.assert_allclose(fmap.values, expected, rtol=0, atol=1e-10)


class TestBilinear:

    def test_cell_centers_are_exact(self, rng: np.random.Generator) -> None:
        fmap = FeatureMap(rng.normal(size=(3, 4, 5)), 4)
        for i in range(4):
            for j in range(5):
                np.testing.assert_array_equal(bilinear_sample(fmap, ((j + 0.5) * 4, (i + 0.5) * 4)), fmap.values[:, i, j])

    def test_midpoint(self) -> None:
        values = np.zeros((1, 2, 2))
        values[0, 0, 1] = 4.0
        fmap = FeatureMap(values, 2)
        # halfway between cell (0, 0) at x=1 and cell (0, 1) at x=3
        np.testing.assert_allclose(bilinear_sample(fmap, (2.0, 1.0)), [2.0])

    def test_border_clamp(self) -> None:
        values = np.arange(4.0).reshape(1, 2, 2)
        fmap = FeatureMap(values, 4)
        np.testing.assert_array_equal(bilinear_sample(fmap, (-10.0, -10.0)), [0.0])
        np.testing.assert_array_equal(bilinear_sample(fmap, (100.0, 100.0)), [3.0])

    @pytest.mark.parametrize('seed', range(500))
    def test_matches_closed_form(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        fmap = FeatureMap(rng.normal(size=(2, 4, 4)), 4)
        x, y = rng.uniform(-4, 20, size=2)
        np.testing.assert_allclose(bilinear_sample(fmap, (x, y)), closed_form(fmap.values, 4, x, y),
                                   rtol=0, atol=1e-12)

    def test_linearity(self, rng: np.random.Generator) -> None:
        a = rng.normal(size=(3, 4, 4))
        b = rng.normal(size=(3, 4, 4))
        points = rng.uniform(0, 16, size=(20, 2))
        mixed = sample_points(FeatureMap(2.0 * a - 3.0 * b, 4), points)
        expected = 2.0 * sample_points(FeatureMap(a, 4), points) - 3.0 * sample_points(FeatureMap(b, 4), points)
        np.testing.assert_allclose(mixed, expected, rtol=0, atol=1e-12)

    def test_batch_matches_single(self, rng: np.random.Generator) -> None:
        maps = rng.normal(size=(2, 3, 4, 4))
        points = rng.uniform(0, 16, size=(5, 2))
        index = np.array([0, 1, 1, 0, 1])
        feats, _ = sample_batch(maps, index, points, 4)
        for m in range(5):
            np.testing.assert_allclose(feats[m], bilinear_sample(FeatureMap(maps[index[m]], 4), points[m]), atol=1e-12)

    def test_batch_backward_matches_finite_differences(self, rng: np.random.Generator) -> None:
        maps = rng.normal(size=(2, 3, 4, 4))
        points = rng.uniform(0, 16, size=(6, 2))
        index = np.array([0, 1, 1, 0, 1, 0])
        upstream = rng.normal(size=(6, 3))
        _, taps = sample_batch(maps, index, points, 4)
        grad = sample_batch_backward(upstream, taps)
        numeric = finite_difference(lambda: float(np.sum(sample_batch(maps, index, points, 4)[0] * upstream)), maps)
        assert relative_error(grad, numeric) < 1e-6


class TestPretext:

    def test_crops_stay_inside(self) -> None:
        sample = Sample(np.zeros((3, 32, 32)), [[1.0, 1.0], [31.0, 16.0]], [1, 2])
        crops, local = crop_around(sample, 16)
        assert crops.shape == (2, 3, 16, 16)
        np.testing.assert_array_equal(local, [[1.0, 1.0], [15.0, 8.0]])

    def test_pretrained_encoder_is_frozen(self, tiny_split: DataSplit, fast_encoder: EncoderConfig) -> None:
        encoder = pretrain_encoder(tiny_split.train, fast_encoder, tiny_split.num_classes, seed=1)
        assert encoder.kind == EncoderKind.PRETEXT_PRETRAINED
        assert encoder.frozen
        random = ConvEncoder(fast_encoder.channels, fast_encoder.width, fast_encoder.stride, seed=1)
        assert encoder.params.checksum() != random.params.checksum()

    def test_pretraining_is_deterministic(self, tiny_split: DataSplit, fast_encoder: EncoderConfig) -> None:
        a = pretrain_encoder(tiny_split.train, fast_encoder, 3, seed=4)
        b = pretrain_encoder(tiny_split.train, fast_encoder, 3, seed=4)
        assert a.params.checksum() == b.params.checksum()
