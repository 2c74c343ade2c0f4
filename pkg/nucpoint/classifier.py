'''
File: classifier.py
Project: nucpoint
File Created: Thursday, 5th March 2026 2:26:55 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Monday, 16th March 2026 11:07:13 am
Modified By: koko (koko231125@gmail.com>)
'''


import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

import nucpoint.interface as ifc
import nucpoint.impl.functional as F
import nucpoint.utils as utils
from nucpoint.config import ClassifierConfig
from nucpoint.detector import DetectorModel, detect
from nucpoint.encoder import sample_batch, sample_batch_backward, sample_points
from nucpoint.errors import DataFormatError, FrozenViolationError, UsageError
from nucpoint.evalkit import CurvePoint, MatchReport, count_matches, dataset_report, match_one_to_one
from nucpoint.impl.base import Linear, ParamSet
from nucpoint.impl.optim import cosine_lr, sgd_step
from nucpoint.rtypes import EncoderKind, Supervision, TrainMode
from nucpoint.synthdata import DataSplit, Sample


logger = logging.getLogger(__name__)

PREDICTION_HEADER = 'x,y,class,det_score,cls_prob'
METRICS_HEADER = ['epoch', 'split', 'average_f1', 'loss']
# Images encoded per inference call when features are precomputed
ENCODE_CHUNK = 32


class LinearHead:
    r"""Single fully connected layer mapping a C' feature to C class logits."""

    def __init__(self, in_features: int, num_classes: int, seed: int = 0) -> None:
        self.layer = Linear(in_features, num_classes, utils.make_rng(seed, 31))
        self.params = self.layer.params

    def __repr__(self) -> str:
        return f'LinearHead({self.in_features} -> {self.num_classes})'

    @property
    def in_features(self) -> int:
        return self.layer.in_features

    @property
    def num_classes(self) -> int:
        return self.layer.out_features

    @property
    def meta(self) -> dict[str, object]:
        return {'model': 'head', 'in_features': self.in_features, 'num_classes': self.num_classes}

    def forward(self, features: np.ndarray) -> np.ndarray:
        return self.layer.forward(features)

    def infer(self, features: np.ndarray) -> np.ndarray:
        return self.layer.infer(features)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return self.layer.backward(grad)


@dataclass
class PredictionSet:
    r"""Classified nuclei of one image.

    Attributes:
        points (np.ndarray):
            [K, 2] (x, y) coordinates.
        classes (np.ndarray):
            [K] 1-based classes.
        det_scores (np.ndarray):
            [K] detection scores, 1.0 for points that did not come from a detector.
        cls_probs (np.ndarray):
            [K] probability of the predicted class.
    """
    points: np.ndarray
    classes: np.ndarray
    det_scores: np.ndarray
    cls_probs: np.ndarray

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.classes = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        self.det_scores = np.asarray(self.det_scores, dtype=np.float64).reshape(-1)
        self.cls_probs = np.asarray(self.cls_probs, dtype=np.float64).reshape(-1)
        k = len(self.points)
        assert len(self.classes) == len(self.det_scores) == len(self.cls_probs) == k, \
            ValueError("prediction columns differ in length")

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> 'PredictionSet':
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros(0), np.zeros(0))

    def rows(self) -> list[list[object]]:
        return [
            [float(x), float(y), int(c), float(s), float(p)]
            for (x, y), c, s, p in zip(self.points, self.classes, self.det_scores, self.cls_probs)
        ]

    def write(self, path: str | Path) -> None:
        utils.write_csv(path, PREDICTION_HEADER.split(','), self.rows())

    @classmethod
    def read(cls, path: str | Path) -> 'PredictionSet':
        """Parse a prediction CSV.

        Raises:
            DataFormatError:
                Naming the file and line of the first malformed row.
        """
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as exc:
            raise DataFormatError(path, f"cannot read predictions ({exc.strerror})") from exc
        if not lines or lines[0].strip() != PREDICTION_HEADER:
            raise DataFormatError(path, f"expected header '{PREDICTION_HEADER}'", 1)
        rows = []
        for number, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            fields = line.split(',')
            if len(fields) != 5:
                raise DataFormatError(path, f"expected 5 fields, got {len(fields)}", number)
            try:
                rows.append((float(fields[0]), float(fields[1]), int(fields[2]), float(fields[3]), float(fields[4])))
            except ValueError:
                raise DataFormatError(path, f"cannot parse row '{line}'", number) from None
        if not rows:
            return cls.empty()
        x, y, c, s, p = zip(*rows)
        return cls(np.stack([x, y], axis=1), c, s, p)


"""Inference
"""


def classify_points(
    encoder: ifc.FeatureEncoder,
    head: LinearHead,
    image: np.ndarray,
    points: np.ndarray,
    det_scores: np.ndarray | None = None,
) -> PredictionSet:
    r"""Classify given coordinates by querying the encoder's feature map at each of them.

    Args:
        encoder (FeatureEncoder):
            The feature extractor.
        head (LinearHead):
            The classification head.
        image (np.ndarray):
            A [3, H, W] image.
        points (np.ndarray):
            [K, 2] coordinates; out-of-image points are sampled at the clamped border.
        det_scores (np.ndarray | None, optional):
            [K] detection scores to carry along. Defaults to None (all 1.0).

    Returns:
        PredictionSet:
            One entry per point, in input order, coordinates unchanged.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    scores = np.ones(len(points)) if det_scores is None else np.asarray(det_scores, dtype=np.float64)
    if len(points) == 0:
        return PredictionSet.empty()
    features = sample_points(encoder.encode(image), points)
    probs = F.softmax(head.infer(features))
    best = probs.argmax(axis=1)
    return PredictionSet(points.copy(), best + 1, scores, probs[np.arange(len(points)), best])


def predict(
    image: np.ndarray,
    detector: DetectorModel,
    encoder: ifc.FeatureEncoder,
    head: LinearHead,
    tau: float = 0.5,
    suppress_radius: float = 0.0,
) -> PredictionSet:
    """Detect, then classify the detected coordinates. Classification never moves a point."""
    found = detect(detector, image, tau, suppress_radius)
    points = np.array([d.point for d in found], dtype=np.float64).reshape(-1, 2)
    return classify_points(encoder, head, image, points, np.array([d.score for d in found]))


def evaluate_pipeline(
    samples: list[Sample],
    detector: DetectorModel,
    encoder: ifc.FeatureEncoder,
    head: LinearHead,
    radius: float,
    tau: float = 0.5,
    suppress_radius: float = 0.0,
) -> tuple[MatchReport, list[PredictionSet]]:
    """Predict every sample and sum the match counts in sample order."""
    preds = [predict(s.image, detector, encoder, head, tau, suppress_radius) for s in samples]
    return dataset_report(zip(preds, samples), radius, head.num_classes), preds


def gt_classification_report(
    encoder: ifc.FeatureEncoder,
    head: LinearHead,
    samples: list[Sample],
    radius: float,
) -> MatchReport:
    """Classify ground truth coordinates, so only the labels can be wrong."""
    report = MatchReport.empty(head.num_classes, radius)
    for sample in samples:
        pred = classify_points(encoder, head, sample.image, sample.points)
        report = report + count_matches(pred.points, pred.classes, sample.points, sample.labels,
                                        radius, head.num_classes)
    return report


def _labels_report(logits: np.ndarray, batch: 'PointBatch', samples: list[Sample], radius: float) -> MatchReport:
    # `batch` holds the ground truth points of `samples` in order
    num_classes = logits.shape[1]
    classes = logits.argmax(axis=1) + 1 if len(logits) else np.zeros(0, dtype=np.int64)
    report = MatchReport.empty(num_classes, radius)
    for n, sample in enumerate(samples):
        mask = batch.image_index == n
        report = report + count_matches(batch.points[mask], classes[mask], sample.points, sample.labels,
                                        radius, num_classes)
    return report


"""Training
"""


@dataclass
class PointBatch:
    r"""Supervision points of a set of images, flattened.

    Attributes:
        image_index (np.ndarray):
            [M] index of the image each point belongs to.
        points (np.ndarray):
            [M, 2] coordinates.
        labels (np.ndarray):
            [M] 0-based labels.
    """
    image_index: np.ndarray
    points: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def supervision_points(
    samples: list[Sample],
    supervision: Supervision,
    detector: DetectorModel | None = None,
    radius: float = 6.0,
    tau: float = 0.5,
) -> PointBatch:
    r"""Coordinates and labels the classifier is trained on.

    Ground truth supervision uses every annotated point. Detector supervision keeps detections
    matched to a ground truth point within `radius`, labelled with that point's class.

    Raises:
        UsageError:
            If detector supervision is requested without a detector.
    """
    index, points, labels = [], [], []
    for n, sample in enumerate(samples):
        if supervision == Supervision.GT:
            pts, lbl = sample.points, sample.labels
        else:
            if detector is None:
                raise UsageError("detector supervision needs a trained detector")
            found = np.array([d.point for d in detect(detector, sample.image, tau)]).reshape(-1, 2)
            pairs = match_one_to_one(found, sample.points, radius)
            pts = found[[p for p, _ in pairs]].reshape(-1, 2)
            lbl = sample.labels[[g for _, g in pairs]]
        index.append(np.full(len(pts), n, dtype=np.int64))
        points.append(pts)
        labels.append(np.asarray(lbl, dtype=np.int64) - 1)
    if not index:
        return PointBatch(np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros(0, dtype=np.int64))
    return PointBatch(np.concatenate(index), np.concatenate(points).reshape(-1, 2), np.concatenate(labels))


def precompute_features(encoder: ifc.FeatureEncoder, samples: list[Sample], batch: PointBatch) -> np.ndarray:
    """[M, C'] features of a frozen encoder at every supervision point."""
    out = np.zeros((len(batch), encoder.channels))
    for start in range(0, len(samples), ENCODE_CHUNK):
        chunk = range(start, min(start + ENCODE_CHUNK, len(samples)))
        maps = encoder.infer(np.stack([samples[n].image for n in chunk]))
        mask = (batch.image_index >= chunk.start) & (batch.image_index < chunk.stop)
        if mask.any():
            feats, _ = sample_batch(maps, batch.image_index[mask] - start, batch.points[mask], encoder.stride)
            out[mask] = feats
    return out


@dataclass
class ClassifierHistory:
    losses: list[float]
    average_f1: list[CurvePoint]


def train_classifier(
    encoder: ifc.FeatureEncoder,
    data: DataSplit,
    config: ClassifierConfig,
    radius: float = 6.0,
    seed: int = 0,
    detector: DetectorModel | None = None,
    tau: float = 0.5,
    metrics_path: str | Path | None = None,
) -> tuple[LinearHead, ifc.FeatureEncoder, ClassifierHistory]:
    r"""Train a classification head on features queried at supervision coordinates.

    In linear mode the encoder is only read; its checksum is compared before and after. In full
    mode a trainable copy of the encoder is optimized together with the head and returned, the
    encoder passed in is left untouched.

    Args:
        encoder (FeatureEncoder):
            The feature extractor.
        data (DataSplit):
            Training samples and held-out samples for the per-epoch curve.
        config (ClassifierConfig):
            Mode, supervision and schedule.
        radius (float, optional):
            Evaluation radius, also the matching radius of detector supervision. Defaults to 6.0.
        seed (int, optional):
            Seed of the head and the batch order. Defaults to 0.
        detector (DetectorModel | None, optional):
            Required for detector supervision. Defaults to None.
        tau (float, optional):
            Detector threshold for detector supervision. Defaults to 0.5.
        metrics_path (str | Path | None, optional):
            A CSV receiving one `epoch,split,average_f1,loss` row per epoch. Defaults to None.

    Returns:
        tuple[LinearHead, FeatureEncoder, ClassifierHistory]:
            The head, the encoder to use with it and the curves.

    Raises:
        FrozenViolationError:
            If the encoder weights changed during linear training.
    """
    if config.mode == TrainMode.END_TO_END:
        raise UsageError("end-to-end training belongs to the joint baseline")
    head = LinearHead(encoder.channels, data.num_classes, seed)
    batch = supervision_points(data.train, config.supervision, detector, radius, tau)
    rng = utils.make_rng(seed, 32)
    history = ClassifierHistory([], [])
    logger.info("training %r in %s mode on %d points", head, config.mode.value, len(batch))

    val_batch = supervision_points(data.validation, Supervision.GT)
    if config.mode == TrainMode.LINEAR:
        checksum = encoder.params.checksum()
        features = precompute_features(encoder, data.train, batch)
        val_features = precompute_features(encoder, data.validation, val_batch)
        step = _linear_epoch(head, features, batch.labels, config, rng)
        trained = encoder

        def evaluate() -> MatchReport:
            return _labels_report(head.infer(val_features), val_batch, data.validation, radius)
    else:
        trained = encoder.copy(EncoderKind.TRAINABLE, False)
        step = _full_epoch(head, trained, data.train, batch, config, rng)

        def evaluate() -> MatchReport:
            return gt_classification_report(trained, head, data.validation, radius)

    for epoch in range(config.epochs):
        loss = step(cosine_lr(config.lr, epoch, config.epochs))
        report = evaluate()
        history.losses.append(loss)
        history.average_f1.append(CurvePoint(epoch + 1, report.average_f1))
        if metrics_path is not None:
            utils.append_csv_row(metrics_path, METRICS_HEADER, [epoch + 1, 'val', report.average_f1, loss])
        logger.debug("classifier epoch %d/%d loss %.4f F1 %.4f", epoch + 1, config.epochs, loss, report.average_f1)

    if config.mode == TrainMode.LINEAR and encoder.params.checksum() != checksum:
        raise FrozenViolationError(f"{encoder!r} changed during linear training")
    logger.info("classifier finished, held-out average F1 %.4f",
                history.average_f1[-1].value if history.average_f1 else 0.0)
    return head, trained, history


def _linear_epoch(
    head: LinearHead,
    features: np.ndarray,
    labels: np.ndarray,
    config: ClassifierConfig,
    rng: np.random.Generator,
) -> Callable[[float], float]:
    def step(lr: float) -> float:
        order = rng.permutation(len(labels))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            head.params.zero_grad()
            loss, grad = F.softmax_cross_entropy(head.forward(features[idx]), labels[idx])
            head.backward(grad)
            sgd_step(head.params, lr, config.momentum)
            total += loss
            batches += 1
        return total / max(batches, 1)
    return step


def _full_epoch(
    head: LinearHead,
    encoder: ifc.FeatureEncoder,
    samples: list[Sample],
    batch: PointBatch,
    config: ClassifierConfig,
    rng: np.random.Generator,
) -> Callable[[float], float]:
    params = ParamSet().merge('encoder', encoder.params).merge('head', head.params)
    counts = np.bincount(batch.image_index, minlength=len(samples))

    def step(lr: float) -> float:
        # Images are grouped until their points fill a batch
        order = rng.permutation(len(samples))
        groups, current, filled = [], [], 0
        for n in order:
            if counts[n] == 0:
                continue
            current.append(int(n))
            filled += counts[n]
            if filled >= config.batch_size:
                groups.append(current)
                current, filled = [], 0
        if current:
            groups.append(current)

        total = 0.0
        for group in groups:
            local = {n: k for k, n in enumerate(group)}
            mask = np.isin(batch.image_index, group)
            image_index = np.array([local[n] for n in batch.image_index[mask]], dtype=np.int64)
            params.zero_grad()
            maps = encoder.forward(np.stack([samples[n].image for n in group]))
            feats, taps = sample_batch(maps, image_index, batch.points[mask], encoder.stride)
            loss, grad = F.softmax_cross_entropy(head.forward(feats), batch.labels[mask])
            encoder.backward(sample_batch_backward(head.backward(grad), taps))
            sgd_step(params, lr, config.momentum)
            total += loss
        return total / max(len(groups), 1)
    return step


def linear_probe(
    encoder: ifc.FeatureEncoder,
    train: list[Sample],
    val: list[Sample],
    num_classes: int,
    config: ClassifierConfig,
    radius: float = 6.0,
    seed: int = 0,
) -> float:
    r"""Representation quality of a frozen encoder.

    A fresh head is fit on features at the ground truth coordinates of `train` for
    `config.probe_epochs` epochs and scored on the ground truth coordinates of `val`, so only
    the labels decide the result.

    Args:
        encoder (FeatureEncoder):
            The encoder to probe. It is never modified.
        train (list[Sample]):
            Samples to fit the head on.
        val (list[Sample]):
            Disjoint samples to score.
        num_classes (int):
            The class count C.
        config (ClassifierConfig):
            Schedule; `mode` and `supervision` are ignored.
        radius (float, optional):
            Matching radius. Defaults to 6.0.
        seed (int, optional):
            Seed of the head and batch order. Defaults to 0.

    Returns:
        float:
            Average F1 on `val`.
    """
    assert not {id(s) for s in train} & {id(s) for s in val}, ValueError("probe splits must be disjoint")
    probe_config = replace(
        config, mode=TrainMode.LINEAR, supervision=Supervision.GT, epochs=config.probe_epochs,
    )
    data = DataSplit(train, val, num_classes, 'probe')
    head, _, _ = train_classifier(encoder, data, probe_config, radius, seed)
    return gt_classification_report(encoder, head, val, radius).average_f1
