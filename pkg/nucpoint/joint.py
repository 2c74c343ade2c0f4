'''
File: joint.py
Project: nucpoint
File Created: Friday, 6th March 2026 10:48:31 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

import nucpoint.impl.functional as F
import nucpoint.utils as utils
from nucpoint.config import DetectorConfig, EncoderConfig, JointConfig
from nucpoint.detector import (
    SCORE_PRIOR, Assignment, GridSpec, assign_targets, build_grid, decode, detection_loss, proposals,
)
from nucpoint.encoder import ConvEncoder
from nucpoint.errors import DataFormatError, ShapeError
from nucpoint.evalkit import CurvePoint, MatchReport, count_matches
from nucpoint.impl.base import Conv2d, ParamSet
from nucpoint.impl.optim import cosine_lr, sgd_step
from nucpoint.rtypes import EncoderKind
from nucpoint.synthdata import DataSplit, Sample


logger = logging.getLogger(__name__)

ProbeHook = Callable[[ConvEncoder], float]


class JointModel:
    r"""Shared-backbone multi-task baseline. Score, offset and per-anchor class heads are 1x1
    convolutions on the same feature map.

    Attributes:
        backbone (ConvEncoder):
            The shared feature extractor, same architecture as the decoupled encoder.
        num_classes (int):
            The class count C.
        params (ParamSet):
            Backbone and head weights.
    """

    def __init__(self, backbone: ConvEncoder, num_classes: int, seed: int = 0) -> None:
        assert isinstance(backbone, ConvEncoder), TypeError(f"backbone must be a ConvEncoder, got {type(backbone)}")
        self.backbone = backbone
        self.num_classes = num_classes
        self.seed = seed

        rng = utils.make_rng(seed, 41)
        c = backbone.channels
        self.score_head = Conv2d(c, 1, kernel=1, rng=rng)
        self.offset_head = Conv2d(c, 2, kernel=1, rng=rng)
        self.class_head = Conv2d(c, num_classes, kernel=1, rng=rng)
        self.score_head.bias.weight[...] = -np.log((1.0 - SCORE_PRIOR) / SCORE_PRIOR)
        self.offset_head.weight.weight *= 0.1

        self.params = ParamSet() \
            .merge('backbone', backbone.params) \
            .merge('score', self.score_head.params) \
            .merge('offset', self.offset_head.params) \
            .merge('class', self.class_head.params)

    def __repr__(self) -> str:
        return f'JointModel({self.backbone!r}, C={self.num_classes})'

    @property
    def stride(self) -> int:
        return self.backbone.stride

    @property
    def meta(self) -> dict[str, object]:
        return {'model': 'joint', 'num_classes': self.num_classes, 'backbone': self.backbone.meta}

    def forward(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        feats = self.backbone.forward(images)
        return self.score_head.forward(feats)[:, 0], self.offset_head.forward(feats), self.class_head.forward(feats)

    def infer(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        feats = self.backbone.infer(images)
        return self.score_head.infer(feats)[:, 0], self.offset_head.infer(feats), self.class_head.infer(feats)

    def backward(self, grad_logits: np.ndarray, grad_offsets: np.ndarray, grad_classes: np.ndarray) -> None:
        grad = self.score_head.backward(grad_logits[:, None]) \
            + self.offset_head.backward(grad_offsets) \
            + self.class_head.backward(grad_classes)
        self.backbone.backward(grad)


def build_joint(
    encoder_config: EncoderConfig,
    num_classes: int,
    seed: int = 0,
    init: ConvEncoder | None = None,
) -> JointModel:
    """A joint model whose backbone is fresh, or a trainable copy of `init`."""
    if init is None:
        backbone = ConvEncoder(encoder_config.channels, encoder_config.width, encoder_config.stride,
                               EncoderKind.TRAINABLE, False, seed)
    else:
        backbone = init.copy(EncoderKind.TRAINABLE, False)
    return JointModel(backbone, num_classes, seed)


def joint_forward(model: JointModel, image: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scores [H', W'] in (0, 1), offsets [2, H', W'] and class logits [C, H', W'] of one image."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ShapeError(f"joint_forward expects one [3, H, W] image, got {image.shape}")
    logits, offsets, classes = model.infer(image[None])
    return F.sigmoid(logits[0]), offsets[0], classes[0]


def joint_loss(
    logits: np.ndarray,
    offsets: np.ndarray,
    class_logits: np.ndarray,
    assignment: Assignment,
    gt_points: np.ndarray,
    gt_labels: np.ndarray,
    grid: GridSpec,
    reg_weight: float = 1.0,
    cls_weight: float = 1.0,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    r"""Detection loss plus weighted cross entropy of the matched anchors' class logits.

    Args:
        logits (np.ndarray):
            [H', W'] score logits.
        offsets (np.ndarray):
            [2, H', W'] offsets.
        class_logits (np.ndarray):
            [C, H', W'] class logits.
        assignment (Assignment):
            Output of `assign_targets` on these maps.
        gt_points (np.ndarray):
            [G, 2] ground truth points.
        gt_labels (np.ndarray):
            [G] 1-based ground truth classes.
        grid (GridSpec):
            The grid of the maps.
        reg_weight (float, optional):
            Weight of the offset term. Defaults to 1.0.
        cls_weight (float, optional):
            Weight of the class term. Defaults to 1.0.

    Returns:
        tuple[float, np.ndarray, np.ndarray, np.ndarray]:
            The loss and its gradients with respect to logits, offsets and class logits.
    """
    loss, grad_logits, grad_offsets = detection_loss(logits, offsets, assignment, gt_points, grid, reg_weight)
    grad_classes = np.zeros_like(class_logits)
    if cls_weight == 0 or len(assignment.pred_index) == 0:
        return loss, grad_logits, grad_offsets, grad_classes

    c = class_logits.shape[0]
    matched = class_logits.reshape(c, -1)[:, assignment.pred_index].T
    labels = np.asarray(gt_labels, dtype=np.int64)[assignment.gt_index] - 1
    ce, grad = F.softmax_cross_entropy(matched, labels)
    grad_classes.reshape(c, -1)[:, assignment.pred_index] = cls_weight * grad.T
    return loss + cls_weight * ce, grad_logits, grad_offsets, grad_classes


def joint_predictions(
    model: JointModel,
    image: np.ndarray,
    tau: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decoded points [K, 2], per-anchor argmax classes [K] and scores [K] of one image."""
    scores, offsets, classes = joint_forward(model, image)
    grid = build_grid(image.shape[1], image.shape[2], model.stride)
    found = decode(scores, offsets, grid, tau)
    points = np.array([d.point for d in found], dtype=np.float64).reshape(-1, 2)
    cells = np.flatnonzero(scores.ravel() > tau)
    labels = classes.reshape(classes.shape[0], -1)[:, cells].argmax(axis=0) + 1
    return points, labels.astype(np.int64), np.array([d.score for d in found])


def joint_report(model: JointModel, samples: list[Sample], radius: float, tau: float = 0.5) -> MatchReport:
    report = MatchReport.empty(model.num_classes, radius)
    for sample in samples:
        points, labels, _ = joint_predictions(model, sample.image, tau)
        report = report + count_matches(points, labels, sample.points, sample.labels, radius, model.num_classes)
    return report


@dataclass
class JointHistory:
    r"""Per-epoch record of a joint run. `probe_f1` starts with the probe before the first epoch."""
    losses: list[float] = field(default_factory=list)
    detection_f1: list[CurvePoint] = field(default_factory=list)
    average_f1: list[CurvePoint] = field(default_factory=list)
    probe_f1: list[CurvePoint] = field(default_factory=list)


def train_joint(
    data: DataSplit,
    config: JointConfig,
    detector_config: DetectorConfig,
    encoder_config: EncoderConfig,
    radius: float = 6.0,
    seed: int = 0,
    init: ConvEncoder | None = None,
    probe_hook: ProbeHook | None = None,
    metrics_path: str | Path | None = None,
) -> tuple[JointModel, JointHistory]:
    r"""Train the shared-backbone baseline end to end.

    Args:
        data (DataSplit):
            Training samples and held-out samples for the curves.
        config (JointConfig):
            Schedule and class loss weight.
        detector_config (DetectorConfig):
            Supplies the threshold, the assignment weight and the offset loss weight.
        encoder_config (EncoderConfig):
            Backbone architecture when `init` is None.
        radius (float, optional):
            Matching radius of the curves. Defaults to 6.0.
        seed (int, optional):
            Seed of weights and batch order. Defaults to 0.
        init (ConvEncoder | None, optional):
            A backbone to start from, copied and never modified. Defaults to None.
        probe_hook (ProbeHook | None, optional):
            Called with the current backbone before training and after every epoch, returns a
            probe F1. Defaults to None.
        metrics_path (str | Path | None, optional):
            A CSV receiving one row per epoch. Defaults to None.

    Returns:
        tuple[JointModel, JointHistory]:
            The trained model and its curves.
    """
    if not data.train:
        raise DataFormatError(data.name, "dataset has no training images")
    model = build_joint(encoder_config, data.num_classes, seed, init)
    rng = utils.make_rng(seed, 42)
    history = JointHistory()
    header = ['epoch', 'loss', 'detection_f1', 'average_f1'] + (['probe_f1'] if probe_hook else [])
    logger.info("training %r on %d images", model, len(data.train))

    if probe_hook is not None:
        history.probe_f1.append(CurvePoint(0, probe_hook(model.backbone)))

    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.epochs)
        order = rng.permutation(len(data.train))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [data.train[k] for k in order[start:start + config.batch_size]]
            model.params.zero_grad()
            total += _batch_loss(model, batch, config, detector_config)
            sgd_step(model.params, lr, config.momentum)
            batches += 1
        loss = total / batches

        report = joint_report(model, data.validation, radius, detector_config.tau)
        history.losses.append(loss)
        history.detection_f1.append(CurvePoint(epoch + 1, report.detection_f1))
        history.average_f1.append(CurvePoint(epoch + 1, report.average_f1))
        row = [epoch + 1, loss, report.detection_f1, report.average_f1]
        if probe_hook is not None:
            history.probe_f1.append(CurvePoint(epoch + 1, probe_hook(model.backbone)))
            row.append(history.probe_f1[-1].value)
        if metrics_path is not None:
            utils.append_csv_row(metrics_path, header, row)
        logger.info("joint epoch %d/%d loss %.4f detection F1 %.4f average F1 %.4f",
                    epoch + 1, config.epochs, loss, report.detection_f1, report.average_f1)

    return model, history


def _batch_loss(model: JointModel, samples: list[Sample], config: JointConfig, det: DetectorConfig) -> float:
    images = np.stack([s.image for s in samples])
    grid = build_grid(images.shape[2], images.shape[3], model.stride)
    logits, offsets, classes = model.forward(images)
    grads = [np.zeros_like(logits), np.zeros_like(offsets), np.zeros_like(classes)]
    total = 0.0
    for n, sample in enumerate(samples):
        points, scores = proposals(logits[n], offsets[n], grid)
        assignment = assign_targets(points, scores, sample.points, det.mu)
        loss, gl, go, gc = joint_loss(logits[n], offsets[n], classes[n], assignment, sample.points,
                                      sample.labels, grid, det.reg_weight, config.cls_weight)
        total += loss
        grads[0][n], grads[1][n], grads[2][n] = gl, go, gc
    n = len(samples)
    model.backward(grads[0] / n, grads[1] / n, grads[2] / n)
    return total / n
