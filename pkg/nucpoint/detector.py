'''
File: detector.py
Project: nucpoint
File Created: Wednesday, 4th March 2026 9:20:47 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import nucpoint.interface as ifc
import nucpoint.impl.functional as F
import nucpoint.utils as utils
from nucpoint.config import DetectorConfig
from nucpoint.errors import DataFormatError, ShapeError
from nucpoint.evalkit import CurvePoint, MatchReport, count_matches, lexicographic_assignment
from nucpoint.impl.base import Conv2d, ParamSet, conv_stack
from nucpoint.impl.optim import cosine_lr, sgd_step
from nucpoint.synthdata import DataSplit, Sample


logger = logging.getLogger(__name__)

# Initial score probability of every grid cell
SCORE_PRIOR = 0.01
METRICS_HEADER = ['epoch', 'split', 'detection_f1', 'loss']


"""Grid
"""


@dataclass(frozen=True)
class GridSpec:
    r"""Reference grid of one anchor per cell.

    Attributes:
        height (int):
            Image height H.
        width (int):
            Image width W.
        stride (int):
            Cell size in pixels.
    """
    height: int
    width: int
    stride: int

    @property
    def rows(self) -> int:
        return self.height // self.stride

    @property
    def cols(self) -> int:
        return self.width // self.stride

    @property
    def anchors(self) -> np.ndarray:
        """[H' * W', 2] anchor coordinates (x, y) in row-major cell order."""
        i, j = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing='ij')
        return np.stack([(j.ravel() + 0.5) * self.stride, (i.ravel() + 0.5) * self.stride], axis=1).astype(np.float64)


def build_grid(height: int, width: int, stride: int) -> GridSpec:
    """Build the grid of an H x W image.

    Raises:
        ShapeError:
            If `stride` does not divide both H and W.
    """
    if stride <= 0 or height <= 0 or width <= 0:
        raise ShapeError(f"grid needs positive sizes, got {height}x{width} with stride {stride}")
    if height % stride or width % stride:
        raise ShapeError(f"stride {stride} does not divide the image size {height}x{width}")
    return GridSpec(height, width, stride)


@dataclass(frozen=True)
class Detection:
    point: tuple[float, float]
    score: float


"""Model
"""


class DetectorModel:
    r"""Single-stage grid point detector: a small conv backbone shared by a 1-channel score head
    and a 2-channel offset head, both 1x1 convolutions.

    Attributes:
        width (int):
            Channel multiplier of the backbone.
        stride (int):
            Grid stride, a power of two.
        params (ParamSet):
            Backbone and head weights.
    """

    def __init__(self, width: int = 1, stride: int = 4, seed: int = 0) -> None:
        assert isinstance(width, int) and width > 0, TypeError(f"width must be a positive int, got {width}")
        assert stride > 0 and stride & (stride - 1) == 0, ShapeError(f"stride must be a power of two, got {stride}")
        self.width = width
        self.stride = stride
        self.seed = seed

        rng = utils.make_rng(seed, 21)
        downsample = int(round(math.log2(stride)))
        channels = [8 * width] + [16 * width] * (downsample + 1)
        strides = [1] + [2] * downsample + [1]
        self.backbone = conv_stack(3, channels, strides, rng)
        self.score_head = Conv2d(channels[-1], 1, kernel=1, rng=rng)
        self.offset_head = Conv2d(channels[-1], 2, kernel=1, rng=rng)
        self.score_head.bias.weight[...] = -math.log((1.0 - SCORE_PRIOR) / SCORE_PRIOR)
        self.offset_head.weight.weight *= 0.1

        self.params = ParamSet() \
            .merge('backbone', self.backbone.params) \
            .merge('score', self.score_head.params) \
            .merge('offset', self.offset_head.params)

    def __repr__(self) -> str:
        return f'DetectorModel(width={self.width}, stride={self.stride}, weights={self.params.num_weights()})'

    @property
    def meta(self) -> dict[str, object]:
        return {'model': 'detector', 'width': self.width, 'stride': self.stride}

    def _check(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 4 or images.shape[1] != 3:
            raise ShapeError(f"detector expects [N, 3, H, W] images, got {images.shape}")
        build_grid(images.shape[2], images.shape[3], self.stride)
        return images - 0.5

    def forward(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        feats = self.backbone.forward(self._check(images))
        return self.score_head.forward(feats)[:, 0], self.offset_head.forward(feats)

    def infer(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        feats = self.backbone.infer(self._check(images))
        return self.score_head.infer(feats)[:, 0], self.offset_head.infer(feats)

    def backward(self, grad_logits: np.ndarray, grad_offsets: np.ndarray) -> None:
        grad = self.score_head.backward(grad_logits[:, None]) + self.offset_head.backward(grad_offsets)
        self.backbone.backward(grad)


def detector_forward(model: ifc.PointDetector, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Score map [H', W'] in (0, 1) and stride-normalized offset map [2, H', W'] of one image."""
    assert isinstance(model, ifc.PointDetector), TypeError(f"{model!r} is not a PointDetector")
    logits, offsets = model.infer(np.asarray(image)[None])
    return F.sigmoid(logits[0]), offsets[0]


"""Decoding
"""


def decode(scores: np.ndarray, offsets: np.ndarray, grid: GridSpec, tau: float = 0.5) -> list[Detection]:
    r"""Turn score and offset maps into detections.

    Every cell with score above `tau` yields anchor + stride * offset, in row-major cell order.

    Args:
        scores (np.ndarray):
            [H', W'] scores.
        offsets (np.ndarray):
            [2, H', W'] offsets (dx, dy) in units of the stride.
        grid (GridSpec):
            The grid the maps were predicted on.
        tau (float, optional):
            Score threshold. Defaults to 0.5.

    Returns:
        list[Detection]:
            The kept detections.
    """
    if scores.shape != (grid.rows, grid.cols) or offsets.shape != (2, grid.rows, grid.cols):
        raise ShapeError(f"maps {scores.shape} / {offsets.shape} do not match the grid {grid.rows}x{grid.cols}")
    out = []
    for i, j in zip(*np.nonzero(scores > tau)):
        x = (j + 0.5) * grid.stride + grid.stride * offsets[0, i, j]
        y = (i + 0.5) * grid.stride + grid.stride * offsets[1, i, j]
        out.append(Detection((float(x), float(y)), float(scores[i, j])))
    return out


def suppress_duplicates(detections: list[Detection], radius: float) -> list[Detection]:
    """Greedy suppression by descending score; detections within `radius` of a kept one are dropped.
    The survivors keep their input order. Radius 0 returns the input unchanged.
    """
    assert radius >= 0, ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0 or len(detections) < 2:
        return list(detections)
    order = sorted(range(len(detections)), key=lambda k: -detections[k].score)
    kept: list[int] = []
    for k in order:
        x, y = detections[k].point
        if all(math.hypot(x - detections[m].point[0], y - detections[m].point[1]) > radius for m in kept):
            kept.append(k)
    return [detections[k] for k in sorted(kept)]


def detect(
    model: ifc.PointDetector,
    image: np.ndarray,
    tau: float = 0.5,
    suppress_radius: float = 0.0,
) -> list[Detection]:
    """Forward, decode and optionally suppress duplicates for one image."""
    grid = build_grid(image.shape[1], image.shape[2], model.stride)
    scores, offsets = detector_forward(model, image)
    return suppress_duplicates(decode(scores, offsets, grid, tau), suppress_radius)


"""Target Assignment and Loss
"""


@dataclass
class Assignment:
    r"""One-to-one pairing of grid proposals with ground truth points.

    Attributes:
        pred_index (np.ndarray):
            Matched proposal (flat cell) indices [M].
        gt_index (np.ndarray):
            Matched ground truth indices [M], ascending.
        num_proposals (int):
            P, every unmatched proposal is a negative.
    """
    pred_index: np.ndarray
    gt_index: np.ndarray
    num_proposals: int

    @property
    def positives(self) -> np.ndarray:
        mask = np.zeros(self.num_proposals, dtype=bool)
        mask[self.pred_index] = True
        return mask


def assignment_cost(
    pred_points: np.ndarray,
    scores: np.ndarray,
    gt_points: np.ndarray,
    mu: float = 0.5,
) -> np.ndarray:
    """[G, P] cost ||p_hat - p|| - mu * score, distances in pixels."""
    dist = np.sqrt(((gt_points[:, None, :] - pred_points[None, :, :]) ** 2).sum(axis=-1))
    return dist - mu * scores[None, :]


def assign_targets(
    pred_points: np.ndarray,
    scores: np.ndarray,
    gt_points: np.ndarray,
    mu: float = 0.5,
) -> Assignment:
    r"""Minimum-cost one-to-one assignment of proposals to ground truth points.

    Args:
        pred_points (np.ndarray):
            Decoded proposal points [P, 2], one per grid cell.
        scores (np.ndarray):
            Proposal scores [P].
        gt_points (np.ndarray):
            Ground truth points [G, 2], G <= P.
        mu (float, optional):
            Weight of the score term. Defaults to 0.5.

    Returns:
        Assignment:
            Every ground truth point paired with exactly one proposal. Equal-cost alternatives go to
            the lowest (ground truth, proposal) indices.
    """
    pred_points = np.asarray(pred_points, dtype=np.float64).reshape(-1, 2)
    gt_points = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(gt_points) > len(pred_points):
        raise ShapeError(f"{len(gt_points)} ground truth points exceed {len(pred_points)} proposals")
    if len(gt_points) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return Assignment(empty, empty.copy(), len(pred_points))
    rows, cols = lexicographic_assignment(assignment_cost(pred_points, scores, gt_points, mu))
    return Assignment(cols.astype(np.int64), rows.astype(np.int64), len(pred_points))


def proposals(logits: np.ndarray, offsets: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """All P = H' * W' proposal points and scores of one image, row-major."""
    points = grid.anchors + grid.stride * offsets.reshape(2, -1).T
    return points, F.sigmoid(logits.ravel())


def detection_loss(
    logits: np.ndarray,
    offsets: np.ndarray,
    assignment: Assignment,
    gt_points: np.ndarray,
    grid: GridSpec,
    reg_weight: float = 1.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    r"""BCE over every cell plus weighted stride-normalized L2 over the matched pairs.

    Args:
        logits (np.ndarray):
            [H', W'] score logits.
        offsets (np.ndarray):
            [2, H', W'] offsets.
        assignment (Assignment):
            Output of `assign_targets` on these maps.
        gt_points (np.ndarray):
            [G, 2] ground truth points.
        grid (GridSpec):
            The grid of the maps.
        reg_weight (float, optional):
            Weight of the L2 term. Defaults to 1.0.

    Returns:
        tuple[float, np.ndarray, np.ndarray]:
            The loss and its gradients with respect to the logits and the offsets.
    """
    targets = assignment.positives.astype(np.float64)
    bce, grad_flat = F.bce_with_logits(logits.ravel(), targets)
    grad_logits = grad_flat.reshape(logits.shape)
    grad_offsets = np.zeros_like(offsets)
    if len(assignment.pred_index) == 0:
        return bce, grad_logits, grad_offsets

    flat = offsets.reshape(2, -1)
    pred = grid.anchors[assignment.pred_index] + grid.stride * flat[:, assignment.pred_index].T
    target = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)[assignment.gt_index]
    reg, grad_pred = F.l2_point_loss(pred, target, scale=grid.stride)
    grad_flat_off = grad_offsets.reshape(2, -1)
    grad_flat_off[:, assignment.pred_index] = reg_weight * grid.stride * grad_pred.T
    return bce + reg_weight * reg, grad_logits, grad_offsets


def batch_detection_loss(
    model: DetectorModel,
    samples: list[Sample],
    config: DetectorConfig,
) -> float:
    """Forward a batch, assign, accumulate the gradients of the mean per-image loss, return the loss."""
    images = np.stack([s.image for s in samples])
    grid = build_grid(images.shape[2], images.shape[3], model.stride)
    logits, offsets = model.forward(images)
    grad_logits = np.zeros_like(logits)
    grad_offsets = np.zeros_like(offsets)
    total = 0.0
    for n, sample in enumerate(samples):
        points, scores = proposals(logits[n], offsets[n], grid)
        assignment = assign_targets(points, scores, sample.points, config.mu)
        loss, gl, go = detection_loss(logits[n], offsets[n], assignment, sample.points, grid, config.reg_weight)
        total += loss
        grad_logits[n] = gl
        grad_offsets[n] = go
    n = len(samples)
    model.backward(grad_logits / n, grad_offsets / n)
    return total / n


"""Training
"""


def detection_report(
    model: DetectorModel,
    samples: list[Sample],
    radius: float,
    tau: float = 0.5,
    suppress_radius: float = 0.0,
) -> MatchReport:
    """Class-agnostic counts of the detector on annotated samples, summed in sample order."""
    report = MatchReport.empty(1, radius)
    for sample in samples:
        found = detect(model, sample.image, tau, suppress_radius)
        points = np.array([d.point for d in found], dtype=np.float64).reshape(-1, 2)
        report = report + count_matches(
            points, np.ones(len(points), dtype=np.int64),
            sample.points, np.ones(len(sample.points), dtype=np.int64),
            radius, 1,
        )
    return report


def round_robin(batches: list[list[list[Sample]]]) -> list[list[Sample]]:
    """Interleave per-dataset batch lists, one batch from each dataset in turn."""
    out = []
    for step in range(max((len(b) for b in batches), default=0)):
        for dataset_batches in batches:
            if step < len(dataset_batches):
                out.append(dataset_batches[step])
    return out


@dataclass
class DetectorHistory:
    r"""Per-epoch record of a detector run."""
    losses: list[float]
    detection_f1: list[CurvePoint]


def train_detector(
    datasets: list[DataSplit],
    config: DetectorConfig,
    radius: float = 6.0,
    seed: int = 0,
    metrics_path: str | Path | None = None,
) -> tuple[DetectorModel, DetectorHistory]:
    r"""Train a detector on one or more datasets.

    Each epoch shuffles every dataset and visits their batches round-robin, so every batch comes
    from a single dataset. Class-agnostic detection F1 on the held-out split of the first dataset
    is recorded after each epoch.

    Args:
        datasets (list[DataSplit]):
            At least one dataset with training samples.
        config (DetectorConfig):
            Architecture and schedule.
        radius (float, optional):
            Matching radius of the validation F1. Defaults to 6.0.
        seed (int, optional):
            Seed of weights and batch order. Defaults to 0.
        metrics_path (str | Path | None, optional):
            A CSV receiving one `epoch,split,detection_f1,loss` row per epoch. Defaults to None.

    Returns:
        tuple[DetectorModel, DetectorHistory]:
            The trained model and its curves.

    Raises:
        DataFormatError:
            If no dataset is given or a dataset has no training images.
    """
    if not datasets:
        raise DataFormatError('<datasets>', "at least one dataset is required")
    for dataset in datasets:
        if not dataset.train:
            raise DataFormatError(dataset.name, "dataset has no training images")

    model = DetectorModel(config.width, config.stride, seed)
    rngs = [utils.make_rng(seed, 22, index) for index in range(len(datasets))]
    history = DetectorHistory([], [])
    logger.info("training %r on %d dataset(s)", model, len(datasets))

    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.epochs)
        per_dataset = []
        for dataset, rng in zip(datasets, rngs):
            order = rng.permutation(len(dataset.train))
            per_dataset.append([
                [dataset.train[k] for k in order[start:start + config.batch_size]]
                for start in range(0, len(order), config.batch_size)
            ])

        total = 0.0
        schedule = round_robin(per_dataset)
        for batch in schedule:
            model.params.zero_grad()
            total += batch_detection_loss(model, batch, config)
            sgd_step(model.params, lr, config.momentum)
        loss = total / len(schedule)

        report = detection_report(model, datasets[0].validation, radius, config.tau, config.suppress_radius)
        history.losses.append(loss)
        history.detection_f1.append(CurvePoint(epoch + 1, report.detection_f1))
        if metrics_path is not None:
            utils.append_csv_row(metrics_path, METRICS_HEADER, [epoch + 1, 'val', report.detection_f1, loss])
        logger.info("detector epoch %d/%d loss %.4f detection F1 %.4f",
                    epoch + 1, config.epochs, loss, report.detection_f1)

    return model, history
