'''
File: test_detector.py
Project: nucpoint
File Created: Tuesday, 10th March 2026 9:48:33 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import itertools

import numpy as np
import pytest

import nucpoint.detector as detector_module
import nucpoint.interface as ifc
from nucpoint.classifier import LinearHead
from nucpoint.config import DetectorConfig
from nucpoint.detector import (
    Detection, DetectorModel, assign_targets, assignment_cost, build_grid, decode, detection_loss,
    detector_forward, proposals, round_robin, suppress_duplicates, train_detector,
)
from nucpoint.errors import DataFormatError, ShapeError
from nucpoint.synthdata import DataSplit, SceneSpec
from tests.helpers import finite_difference, naive_forward, relative_error


class TestGrid:

    def test_anchors(self) -> None:
        grid = build_grid(8, 8, 4)
        np.testing.assert_array_equal(grid.anchors, [[2, 2], [6, 2], [2, 6], [6, 6]])

    def test_stride_must_divide(self) -> None:
        with pytest.raises(ShapeError):
            build_grid(10, 8, 4)


class TestDecode:

    def test_single_cell(self) -> None:
        grid = build_grid(8, 8, 4)
        scores = np.array([[0.9, 0.1], [0.2, 0.4]])
        offsets = np.zeros((2, 2, 2))
        offsets[:, 0, 0] = (0.25, -0.5)
        found = decode(scores, offsets, grid, 0.5)
        assert found == [Detection((3.0, 0.0), 0.9)]

    def test_empty_when_below_threshold(self) -> None:
        grid = build_grid(8, 8, 4)
        assert decode(np.full((2, 2), 0.5), np.zeros((2, 2, 2)), grid, 0.5) == []

    @pytest.mark.parametrize('seed', range(200))
    def test_matches_exhaustive_scan(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        rows, cols = rng.integers(1, 5, size=2)
        grid = build_grid(int(rows) * 4, int(cols) * 4, 4)
        scores = rng.uniform(size=(rows, cols)) * rng.choice([0.4, 1.0])
        offsets = rng.normal(size=(2, rows, cols))

        expected = []
        for i in range(rows):
            for j in range(cols):
                if scores[i, j] > 0.5:
                    x = (j + 0.5) * 4 + 4 * offsets[0, i, j]
                    y = (i + 0.5) * 4 + 4 * offsets[1, i, j]
                    expected.append(Detection((float(x), float(y)), float(scores[i, j])))
        assert decode(scores, offsets, grid, 0.5) == expected

    def test_map_shape_mismatch(self) -> None:
        with pytest.raises(ShapeError):
            decode(np.zeros((3, 3)), np.zeros((2, 3, 3)), build_grid(8, 8, 4))


class TestSuppress:

    def test_keeps_highest_score(self) -> None:
        dets = [Detection((0.0, 0.0), 0.6), Detection((1.0, 0.0), 0.9), Detection((10.0, 0.0), 0.7)]
        assert suppress_duplicates(dets, 2.0) == [dets[1], dets[2]]

    def test_zero_radius_is_identity(self) -> None:
        dets = [Detection((0.0, 0.0), 0.6), Detection((0.0, 0.0), 0.9)]
        assert suppress_duplicates(dets, 0.0) == dets


def brute_force_assignment(cost: np.ndarray) -> float:
    g, p = cost.shape
    return min(sum(cost[k, perm[k]] for k in range(g)) for perm in itertools.permutations(range(p), g))


class TestAssignment:

    @pytest.mark.parametrize('seed', range(500))
    def test_optimal_against_brute_force(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 7))
        g = int(rng.integers(0, p + 1))
        preds = rng.uniform(0, 32, size=(p, 2))
        scores = rng.uniform(size=p)
        gts = rng.uniform(0, 32, size=(g, 2))

        assignment = assign_targets(preds, scores, gts, mu=0.5)
        assert len(assignment.gt_index) == g
        assert len(set(assignment.pred_index.tolist())) == g
        if g == 0:
            return
        cost = assignment_cost(preds, scores, gts, 0.5)
        total = cost[assignment.gt_index, assignment.pred_index].sum()
        assert total == pytest.approx(brute_force_assignment(cost), abs=1e-9)

    def test_single_nearest(self) -> None:
        preds = np.array([[0.0, 0.0], [10.0, 10.0]])
        assignment = assign_targets(preds, np.array([0.5, 0.5]), np.array([[9.0, 9.0]]))
        assert assignment.pred_index.tolist() == [1]
        assert assignment.positives.tolist() == [False, True]

    def test_more_points_than_proposals(self) -> None:
        with pytest.raises(ShapeError):
            assign_targets(np.zeros((1, 2)), np.zeros(1), np.zeros((2, 2)))

    def test_cost_is_in_pixels(self) -> None:
        # a confident proposal 2.5 px away loses to an unscored one 1 px away
        preds = np.array([[1.0, 0.0], [2.5, 0.0]])
        scores = np.array([0.0, 1.0])
        gts = np.array([[0.0, 0.0]])
        np.testing.assert_allclose(assignment_cost(preds, scores, gts), [[1.0, 2.0]])
        assert assign_targets(preds, scores, gts).pred_index.tolist() == [0]

    def test_equidistant_proposals_go_to_lowest_index(self) -> None:
        preds = np.array([[2.0, 0.0], [0.0, 0.0]])
        assignment = assign_targets(preds, np.array([0.3, 0.3]), np.array([[1.0, 0.0]]))
        assert assignment.pred_index.tolist() == [0]

    @pytest.mark.parametrize('flip', [False, True])
    def test_symmetric_ties_are_lexicographic(self, flip: bool) -> None:
        preds = np.array([[0.0, 2.0], [2.0, 0.0]])
        if flip:
            preds = preds[::-1].copy()
        gts = np.array([[0.0, 0.0], [2.0, 2.0]])
        assignment = assign_targets(preds, np.zeros(2), gts)
        assert assignment.gt_index.tolist() == [0, 1]
        assert assignment.pred_index.tolist() == [0, 1]


class TestLoss:

    @pytest.mark.parametrize('seed', range(10))
    def test_finite_differences(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        grid = build_grid(12, 12, 4)
        logits = rng.normal(size=(3, 3))
        offsets = rng.normal(scale=0.3, size=(2, 3, 3))
        gts = rng.uniform(0, 12, size=(2, 2))
        points, scores = proposals(logits, offsets, grid)
        assignment = assign_targets(points, scores, gts)

        _, grad_logits, grad_offsets = detection_loss(logits, offsets, assignment, gts, grid, 1.5)

        def objective() -> float:
            return detection_loss(logits, offsets, assignment, gts, grid, 1.5)[0]

        assert relative_error(grad_logits, finite_difference(objective, logits)) < 1e-4
        assert relative_error(grad_offsets, finite_difference(objective, offsets)) < 1e-4

    def test_no_ground_truth_is_pure_bce(self) -> None:
        grid = build_grid(8, 8, 4)
        logits = np.zeros((2, 2))
        points, scores = proposals(logits, np.zeros((2, 2, 2)), grid)
        assignment = assign_targets(points, scores, np.zeros((0, 2)))
        loss, _, grad_offsets = detection_loss(logits, np.zeros((2, 2, 2)), assignment, np.zeros((0, 2)), grid)
        assert loss == pytest.approx(np.log(2.0))
        assert not grad_offsets.any()

    def test_perfect_predictions_cost_nothing(self) -> None:
        grid = build_grid(8, 8, 4)
        gts = np.array([[3.0, 1.0], [5.0, 7.0]])
        logits = np.full((2, 2), -20.0)
        logits[0, 0] = logits[1, 1] = 20.0
        offsets = np.zeros((2, 2, 2))
        offsets[:, 0, 0] = (0.25, -0.25)
        offsets[:, 1, 1] = (-0.25, 0.25)
        points, scores = proposals(logits, offsets, grid)
        assignment = assign_targets(points, scores, gts)
        assert assignment.pred_index.tolist() == [0, 3]
        loss, _, _ = detection_loss(logits, offsets, assignment, gts, grid)
        assert loss < 1e-3


class TestModel:

    def test_shapes(self) -> None:
        model = DetectorModel(width=1, stride=4, seed=0)
        scores, offsets = detector_forward(model, np.zeros((3, 16, 16)))
        assert scores.shape == (4, 4)
        assert offsets.shape == (2, 4, 4)
        assert np.all((scores > 0) & (scores < 1))

    def test_low_initial_scores(self) -> None:
        scores, _ = detector_forward(DetectorModel(seed=3), np.full((3, 16, 16), 0.5))
        assert scores.max() < 0.5

    def test_forward_is_the_layer_composition(self, rng: np.random.Generator) -> None:
        model = DetectorModel(width=1, stride=4, seed=2)
        image = rng.uniform(size=(3, 8, 8))
        feats = naive_forward(model.backbone.layers, image - 0.5)
        logits = naive_forward([model.score_head], feats)[0]
        scores, offsets = detector_forward(model, image)
        np.testing.assert_allclose(scores, 1.0 / (1.0 + np.exp(-logits)), rtol=0, atol=1e-10)
        np.testing.assert_allclose(offsets, naive_forward([model.offset_head], feats), rtol=0, atol=1e-10)

    def test_is_a_point_detector(self) -> None:
        assert isinstance(DetectorModel(width=1), ifc.PointDetector)
        with pytest.raises(AssertionError):
            detector_forward(LinearHead(4, 3), np.zeros((3, 8, 8)))

    def test_width_scales_weights(self) -> None:
        assert DetectorModel(width=4).params.num_weights() > 4 * DetectorModel(width=1).params.num_weights()

    def test_training_is_deterministic(self, tiny_split: DataSplit, fast_detector: DetectorConfig) -> None:
        a, history_a = train_detector([tiny_split], fast_detector, seed=5)
        b, history_b = train_detector([tiny_split], fast_detector, seed=5)
        assert a.params.checksum() == b.params.checksum()
        assert history_a.losses == history_b.losses
        assert len(history_a.detection_f1) == fast_detector.epochs

    def test_no_training_images(self, tiny_split: DataSplit, fast_detector: DetectorConfig) -> None:
        empty = DataSplit([], tiny_split.test, 3, 'empty')
        with pytest.raises(DataFormatError):
            train_detector([empty], fast_detector)


class TestDatasetMixing:

    def test_round_robin_order(self) -> None:
        batches = [[['a1'], ['a2'], ['a3']], [['b1']], [['c1'], ['c2']]]
        assert round_robin(batches) == [['a1'], ['b1'], ['c1'], ['a2'], ['c2'], ['a3']]

    def test_round_robin_empty(self) -> None:
        assert round_robin([]) == []

    def test_every_batch_comes_from_one_dataset(self, monkeypatch: pytest.MonkeyPatch, tiny_split: DataSplit,
                                                tiny_spec: SceneSpec) -> None:
        other = DataSplit.generate(tiny_spec, seed=8, n_train=2, n_test=1, name='other')
        seen = []

        def record(model: DetectorModel, batch: list, config: DetectorConfig) -> float:
            seen.append(batch)
            return 0.0

        monkeypatch.setattr(detector_module, 'batch_detection_loss', record)
        train_detector([tiny_split, other], DetectorConfig(epochs=2, batch_size=2))

        def owner(batch: list) -> str:
            names = {'first' if any(s is t for t in tiny_split.train) else 'other' for s in batch}
            assert len(names) == 1
            return names.pop()

        # 4 + 2 images in batches of 2, per epoch
        assert [owner(batch) for batch in seen] == ['first', 'other', 'first'] * 2
