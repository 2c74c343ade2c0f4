'''
File: test_joint.py
Project: nucpoint
File Created: Wednesday, 11th March 2026 4:50:01 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import csv

import numpy as np
import pytest

from nucpoint.config import DetectorConfig, EncoderConfig, JointConfig
from nucpoint.detector import assign_targets, build_grid, detection_loss, proposals
from nucpoint.encoder import ConvEncoder
from nucpoint.joint import build_joint, joint_forward, joint_loss, joint_predictions, train_joint
from nucpoint.rtypes import EncoderKind
from nucpoint.synthdata import DataSplit
from tests.helpers import finite_difference, naive_forward, relative_error


def random_case(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    grid = build_grid(12, 12, 4)
    logits = rng.normal(size=(3, 3))
    offsets = rng.normal(scale=0.3, size=(2, 3, 3))
    classes = rng.normal(size=(3, 3, 3))
    gts = rng.uniform(0, 12, size=(3, 2))
    labels = rng.integers(1, 4, size=3)
    points, scores = proposals(logits, offsets, grid)
    assignment = assign_targets(points, scores, gts)
    return grid, logits, offsets, classes, gts, labels, assignment


class TestJointLoss:

    @pytest.mark.parametrize('seed', range(10))
    def test_finite_differences(self, seed: int) -> None:
        grid, logits, offsets, classes, gts, labels, assignment = random_case(seed)
        _, gl, go, gc = joint_loss(logits, offsets, classes, assignment, gts, labels, grid, 1.0, 0.7)

        def objective() -> float:
            return joint_loss(logits, offsets, classes, assignment, gts, labels, grid, 1.0, 0.7)[0]

        assert relative_error(gl, finite_difference(objective, logits)) < 1e-4
        assert relative_error(go, finite_difference(objective, offsets)) < 1e-4
        assert relative_error(gc, finite_difference(objective, classes)) < 1e-4

    def test_zero_class_weight_is_detection_loss(self) -> None:
        grid, logits, offsets, classes, gts, labels, assignment = random_case(0)
        loss, gl, go, gc = joint_loss(logits, offsets, classes, assignment, gts, labels, grid, 1.0, 0.0)
        det, det_gl, det_go = detection_loss(logits, offsets, assignment, gts, grid, 1.0)
        assert loss == det
        np.testing.assert_array_equal(gl, det_gl)
        np.testing.assert_array_equal(go, det_go)
        assert not gc.any()

    def test_perfect_predictions_cost_nothing(self) -> None:
        grid = build_grid(8, 8, 4)
        gts = np.array([[3.0, 1.0], [5.0, 7.0]])
        labels = np.array([2, 3])
        logits = np.full((2, 2), -20.0)
        logits[0, 0] = logits[1, 1] = 20.0
        offsets = np.zeros((2, 2, 2))
        offsets[:, 0, 0] = (0.25, -0.25)
        offsets[:, 1, 1] = (-0.25, 0.25)
        classes = np.zeros((3, 2, 2))
        classes[1, 0, 0] = classes[2, 1, 1] = 30.0
        points, scores = proposals(logits, offsets, grid)
        assignment = assign_targets(points, scores, gts)
        loss, _, _, _ = joint_loss(logits, offsets, classes, assignment, gts, labels, grid, 1.0, 1.0)
        assert loss < 1e-3


class TestJointModel:

    def test_shapes(self) -> None:
        model = build_joint(EncoderConfig(channels=4, width=4, stride=4), num_classes=3, seed=0)
        scores, offsets, classes = joint_forward(model, np.zeros((3, 16, 16)))
        assert scores.shape == (4, 4)
        assert offsets.shape == (2, 4, 4)
        assert classes.shape == (3, 4, 4)

    def test_predictions_align(self, rng: np.random.Generator) -> None:
        model = build_joint(EncoderConfig(channels=4, width=4, stride=4), num_classes=3, seed=0)
        points, labels, scores = joint_predictions(model, rng.uniform(size=(3, 16, 16)), tau=0.0)
        assert points.shape == (16, 2)
        assert labels.shape == scores.shape == (16, )
        assert set(labels.tolist()) <= {1, 2, 3}

    def test_forward_is_the_layer_composition(self, rng: np.random.Generator) -> None:
        model = build_joint(EncoderConfig(channels=3, width=2, stride=2), num_classes=3, seed=4)
        image = rng.uniform(size=(3, 8, 8))
        feats = naive_forward(model.backbone.net.layers, image - 0.5)
        logits = naive_forward([model.score_head], feats)[0]
        scores, offsets, classes = joint_forward(model, image)
        np.testing.assert_allclose(scores, 1.0 / (1.0 + np.exp(-logits)), rtol=0, atol=1e-10)
        np.testing.assert_allclose(offsets, naive_forward([model.offset_head], feats), rtol=0, atol=1e-10)
        np.testing.assert_allclose(classes, naive_forward([model.class_head], feats), rtol=0, atol=1e-10)

    def test_init_is_copied(self) -> None:
        init = ConvEncoder(channels=4, width=4, kind=EncoderKind.PRETEXT_PRETRAINED)
        model = build_joint(EncoderConfig(channels=4, width=4), 3, init=init)
        assert model.backbone is not init
        assert model.backbone.params.checksum() == init.params.checksum()
        assert not model.backbone.frozen


class TestTrainJoint:

    def test_probe_trajectory_has_every_epoch(self, tiny_split: DataSplit, fast_joint: JointConfig) -> None:
        calls = []

        def hook(encoder: ConvEncoder) -> float:
            calls.append(encoder.params.checksum())
            return 0.5

        init = ConvEncoder(channels=4, width=4, kind=EncoderKind.PRETEXT_PRETRAINED)
        before = init.params.checksum()
        _, history = train_joint(tiny_split, fast_joint, DetectorConfig(), EncoderConfig(channels=4, width=4),
                                 init=init, probe_hook=hook)
        assert [p.epoch for p in history.probe_f1] == [0, 1, 2]
        assert calls[0] == before
        assert init.params.checksum() == before
        assert len(history.average_f1) == len(history.detection_f1) == fast_joint.epochs

    def test_deterministic_metrics(self, tmp_path, tiny_split: DataSplit, fast_joint: JointConfig) -> None:
        config = EncoderConfig(channels=4, width=4)
        train_joint(tiny_split, fast_joint, DetectorConfig(), config, seed=2, metrics_path=tmp_path / 'a.csv')
        train_joint(tiny_split, fast_joint, DetectorConfig(), config, seed=2, metrics_path=tmp_path / 'b.csv')
        a = (tmp_path / 'a.csv').read_bytes()
        assert a == (tmp_path / 'b.csv').read_bytes()
        assert a.splitlines()[0] == b'epoch,loss,detection_f1,average_f1'

    def test_every_epoch_gets_a_fresh_backbone_score(self, tmp_path, tiny_split: DataSplit) -> None:
        calls = []

        def hook(encoder: ConvEncoder) -> float:
            calls.append(encoder.params.checksum())
            return float(len(calls))

        config = JointConfig(epochs=4, batch_size=2, lr=0.01)
        _, history = train_joint(tiny_split, config, DetectorConfig(), EncoderConfig(channels=4, width=4),
                                 probe_hook=hook, metrics_path=tmp_path / 'metrics.csv')
        assert [p.epoch for p in history.probe_f1] == [0, 1, 2, 3, 4]
        assert [p.value for p in history.probe_f1] == [1.0, 2.0, 3.0, 4.0, 5.0]
        assert len(calls) == 5
        with open(tmp_path / 'metrics.csv', newline='') as file:
            rows = list(csv.DictReader(file))
        assert [(row['epoch'], row['probe_f1']) for row in rows] == [
            ('1', '2.0'), ('2', '3.0'), ('3', '4.0'), ('4', '5.0'),
        ]
