'''
File: test_classifier.py
Project: nucpoint
File Created: Wednesday, 11th March 2026 10:12:52 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


from pathlib import Path

import numpy as np
import pytest

from nucpoint.classifier import (
    LinearHead, PredictionSet, classify_points, linear_probe, predict, supervision_points, train_classifier,
)
from nucpoint.config import ClassifierConfig, EncoderConfig
from nucpoint.detector import DetectorModel, detect
from nucpoint.encoder import ConvEncoder, FeatureMap
from nucpoint.errors import DataFormatError, UsageError
from nucpoint.impl.base import ParamSet
from nucpoint.rtypes import EncoderKind, Supervision, TrainMode
from nucpoint.synthdata import DataSplit, Sample


class IdentityEncoder:
    """Stride-1 encoder whose features are the image channels."""
    stride = 1
    channels = 3
    frozen = True
    kind = EncoderKind.RANDOM_FROZEN

    def __init__(self) -> None:
        self.params = ParamSet()
        self.meta = {}

    def encode(self, image: np.ndarray) -> FeatureMap:
        return FeatureMap(np.asarray(image, dtype=np.float64), 1)

    def forward(self, images: np.ndarray) -> np.ndarray:
        return self.infer(images)

    def infer(self, images: np.ndarray) -> np.ndarray:
        return np.asarray(images, dtype=np.float64)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad


def one_hot_sample(index: int) -> Sample:
    """An 8x12 image with one nucleus per class, each painted as a one-hot 3x3 block."""
    image = np.zeros((3, 8, 12))
    points, labels = [], []
    for c in range(3):
        col = 1 + 4 * c
        image[c, 2:5, col:col + 3] = 1.0
        points.append((col + 1.5, 3.5))
        labels.append(c + 1)
    return Sample(image, points, labels, name=f'oh_{index}')


class TestInference:

    def test_hand_computed_head(self) -> None:
        head = LinearHead(3, 3)
        head.layer.weight.weight[...] = np.eye(3)
        head.layer.bias.weight[...] = 0.0
        sample = one_hot_sample(0)
        pred = classify_points(IdentityEncoder(), head, sample.image, sample.points)
        np.testing.assert_array_equal(pred.classes, [1, 2, 3])
        np.testing.assert_array_equal(pred.points, sample.points)
        expected = np.exp(1.0) / (np.exp(1.0) + 2.0)
        np.testing.assert_allclose(pred.cls_probs, [expected] * 3)
        np.testing.assert_array_equal(pred.det_scores, [1.0, 1.0, 1.0])

    def test_no_points(self) -> None:
        pred = classify_points(IdentityEncoder(), LinearHead(3, 3), np.zeros((3, 8, 8)), np.zeros((0, 2)))
        assert len(pred) == 0

    @pytest.mark.parametrize('seed', range(5))
    def test_point_order_is_preserved(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        image = rng.uniform(size=(3, 16, 16))
        points = rng.uniform(0, 16, size=(7, 2))
        scores = rng.uniform(size=7)
        encoder = ConvEncoder(channels=4, width=4, seed=seed)
        head = LinearHead(4, 3, seed=seed)
        perm = rng.permutation(7)
        base = classify_points(encoder, head, image, points, scores)
        shuffled = classify_points(encoder, head, image, points[perm], scores[perm])
        np.testing.assert_array_equal(shuffled.points, base.points[perm])
        np.testing.assert_array_equal(shuffled.classes, base.classes[perm])
        np.testing.assert_array_equal(shuffled.det_scores, base.det_scores[perm])
        np.testing.assert_allclose(shuffled.cls_probs, base.cls_probs[perm], rtol=0, atol=1e-12)

    def test_predict_keeps_detected_points(self, rng: np.random.Generator) -> None:
        image = rng.uniform(size=(3, 16, 16))
        detector = DetectorModel(seed=1)
        encoder = ConvEncoder(channels=4, width=4)
        head = LinearHead(4, 3, seed=2)
        found = detect(detector, image, tau=0.0)
        pred = predict(image, detector, encoder, head, tau=0.0)
        assert len(pred) == len(found) == 16
        np.testing.assert_array_equal(pred.points, [d.point for d in found])
        np.testing.assert_array_equal(pred.det_scores, [d.score for d in found])
        assert set(pred.classes.tolist()) <= {1, 2, 3}


class TestPredictionSet:

    def test_csv_round_trip(self, tmp_path: Path) -> None:
        pred = PredictionSet(np.array([[1.5, 2.25]]), [2], [0.75], [0.5])
        pred.write(tmp_path / 'p.csv')
        assert (tmp_path / 'p.csv').read_text().splitlines()[0] == 'x,y,class,det_score,cls_prob'
        back = PredictionSet.read(tmp_path / 'p.csv')
        assert back.rows() == pred.rows()

    def test_malformed_row(self, tmp_path: Path) -> None:
        path = tmp_path / 'p.csv'
        path.write_text('x,y,class,det_score,cls_prob\n1,2,x,0.5,0.5\n')
        with pytest.raises(DataFormatError) as info:
            PredictionSet.read(path)
        assert info.value.line == 2


class TestTraining:

    def test_linear_mode_keeps_encoder(self, tiny_split: DataSplit, fast_classifier: ClassifierConfig) -> None:
        encoder = ConvEncoder(channels=4, width=4)
        before = encoder.params.checksum()
        head, trained, history = train_classifier(encoder, tiny_split, fast_classifier, seed=0)
        assert trained is encoder
        assert encoder.params.checksum() == before
        assert head.num_classes == 3
        assert [p.epoch for p in history.average_f1] == [1, 2]

    def test_full_mode_trains_a_copy(self, tiny_split: DataSplit) -> None:
        config = ClassifierConfig(mode=TrainMode.FULL, epochs=2, batch_size=8, lr=0.05)
        encoder = ConvEncoder(channels=4, width=4)
        before = encoder.params.checksum()
        _, trained, _ = train_classifier(encoder, tiny_split, config, seed=0)
        assert trained is not encoder
        assert encoder.params.checksum() == before
        assert trained.params.checksum() != before
        assert trained.kind == EncoderKind.TRAINABLE

    def test_training_is_deterministic(self, tiny_split: DataSplit, fast_classifier: ClassifierConfig) -> None:
        encoder = ConvEncoder(channels=4, width=4)
        a, _, history_a = train_classifier(encoder, tiny_split, fast_classifier, seed=3)
        b, _, history_b = train_classifier(encoder, tiny_split, fast_classifier, seed=3)
        assert a.params.checksum() == b.params.checksum()
        assert history_a.losses == history_b.losses

    def test_end_to_end_is_not_a_classifier_mode(self, tiny_split: DataSplit) -> None:
        with pytest.raises(UsageError):
            train_classifier(ConvEncoder(channels=4, width=4), tiny_split,
                             ClassifierConfig(mode=TrainMode.END_TO_END))

    def test_detector_supervision_needs_detector(self, tiny_split: DataSplit) -> None:
        with pytest.raises(UsageError):
            supervision_points(tiny_split.train, Supervision.DETECTOR)

    def test_gt_supervision_points(self, tiny_split: DataSplit) -> None:
        batch = supervision_points(tiny_split.train, Supervision.GT)
        assert len(batch) == sum(len(s.points) for s in tiny_split.train)
        assert batch.labels.min() >= 0 and batch.labels.max() < 3


class TestProbe:

    def test_separable_features_probe_perfectly(self) -> None:
        train = [one_hot_sample(k) for k in range(6)]
        val = [one_hot_sample(k) for k in range(6, 8)]
        config = ClassifierConfig(lr=0.1, batch_size=64, probe_epochs=100)
        assert linear_probe(IdentityEncoder(), train, val, 3, config, radius=2.0) == pytest.approx(1.0)

    def test_probe_leaves_encoder_untouched(self, tiny_split: DataSplit, fast_encoder: EncoderConfig,
                                            fast_classifier: ClassifierConfig) -> None:
        encoder = ConvEncoder(fast_encoder.channels, fast_encoder.width, fast_encoder.stride)
        before = encoder.params.checksum()
        score = linear_probe(encoder, tiny_split.train, tiny_split.test, 3, fast_classifier)
        assert 0.0 <= score <= 1.0
        assert encoder.params.checksum() == before

    def test_probe_rejects_overlap(self, tiny_split: DataSplit, fast_classifier: ClassifierConfig) -> None:
        with pytest.raises(AssertionError):
            linear_probe(IdentityEncoder(), tiny_split.train, tiny_split.train[:1], 3, fast_classifier)
