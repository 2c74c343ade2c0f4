'''
File: evalkit.py
Project: nucpoint
File Created: Wednesday, 4th March 2026 1:15:32 pm
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

import nucpoint.utils as utils


@dataclass(frozen=True)
class CurvePoint:
    r"""One value of a per-epoch training curve."""
    epoch: int
    value: float


"""Matching
"""


def lexicographic_assignment(cost: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    r"""Minimum-cost assignment of rows to columns, ties broken by the lowest (row, column) indices.

    Rows are fixed in order. Row r takes the lowest column that still admits an optimal
    completion of rows r+1.. over the remaining columns, so among all optimal assignments the
    result has the lexicographically smallest column sequence. A column c is only tested when
    `cost[r, c]` plus the optimum of the later rows over all free columns reaches the target.

    Args:
        cost (np.ndarray):
            A finite [R, K] cost matrix.
        tol (float, optional):
            Relative tolerance under which two totals are equal. Defaults to 1e-9.

    Returns:
        tuple[np.ndarray, np.ndarray]:
            Row and column indices of the pairs, sorted by row. With R > K only K rows are paired.
    """
    cost = np.asarray(cost, dtype=np.float64)
    num_rows, num_cols = cost.shape
    if num_rows == 0 or num_cols == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()
    if num_rows > num_cols:
        # every optimum leaves exactly R - K rows on the padding
        cost = np.hstack([cost, np.zeros((num_rows, num_rows - num_cols))])

    free = np.ones(cost.shape[1], dtype=bool)
    chosen = np.zeros(num_rows, dtype=np.int64)

    def optimum(start: int) -> float:
        if start == num_rows:
            return 0.0
        sub = cost[start:][:, free]
        rows, cols = linear_sum_assignment(sub)
        return float(sub[rows, cols].sum())

    target = optimum(0)
    for r in range(num_rows):
        slack = tol * max(1.0, abs(target))
        bound = optimum(r + 1)
        candidates = np.flatnonzero(free & (cost[r] + bound <= target + slack))
        for c in candidates:
            free[c] = False
            rest = optimum(r + 1)
            if cost[r, c] + rest <= target + slack:
                chosen[r] = c
                target = rest
                break
            free[c] = True
        else:
            sub_cols = np.flatnonzero(free)
            rows, cols = linear_sum_assignment(cost[r:][:, free])
            chosen[r] = sub_cols[cols[rows == 0][0]]
            free[chosen[r]] = False
            target = optimum(r + 1)

    keep = chosen < num_cols
    return np.flatnonzero(keep).astype(np.int64), chosen[keep]


def match_one_to_one(
    preds: np.ndarray | Sequence[tuple[float, float]],
    gts: np.ndarray | Sequence[tuple[float, float]],
    radius: float,
) -> list[tuple[int, int]]:
    r"""Distance-thresholded one-to-one matching between predicted and ground truth points.

    Pairs farther apart than `radius` are infeasible. Among all matchings the result has the
    largest number of feasible pairs and, among those, the smallest total distance. It is solved
    as one rectangular assignment where infeasible pairs carry a penalty larger than the sum of
    any feasible matching. Remaining ties go to the lowest (ground truth, prediction) indices.

    Args:
        preds (np.ndarray | Sequence[tuple[float, float]]):
            Predicted points [P, 2].
        gts (np.ndarray | Sequence[tuple[float, float]]):
            Ground truth points [G, 2].
        radius (float):
            The matching radius, strictly positive.

    Returns:
        list[tuple[int, int]]:
            Matched (prediction index, ground truth index) pairs sorted by ground truth index.
    """
    assert radius > 0, ValueError(f"matching radius must be positive, got {radius}")
    preds = np.asarray(preds, dtype=np.float64).reshape(-1, 2)
    gts = np.asarray(gts, dtype=np.float64).reshape(-1, 2)
    if len(preds) == 0 or len(gts) == 0:
        return []

    dist = np.sqrt(((gts[:, None, :] - preds[None, :, :]) ** 2).sum(axis=-1))     # [G, P]
    feasible = dist <= radius
    if not feasible.any():
        return []

    penalty = radius * (min(dist.shape) + 1) + 1.0
    cost = np.where(feasible, dist, penalty)
    rows, cols = lexicographic_assignment(cost)
    pairs = [(int(p), int(g)) for g, p in zip(rows, cols) if feasible[g, p]]
    return sorted(pairs, key=lambda pair: (pair[1], pair[0]))


"""Reports
"""


def _f1(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    # 2TP + FP + FN = 0 is scored 0
    denom = 2 * tp + fp + fn
    safe = np.where(denom > 0, denom, 1)
    return np.where(denom > 0, 2 * tp / safe, 0.0)


@dataclass
class MatchReport:
    r"""Per-class and class-agnostic match counts with their F1 scores.

    Counts are summed across images before any F1 is computed, so reports are combined with `+`
    and never by averaging scores.

    Attributes:
        tp (np.ndarray):
            True positives per class, index 0 is class 1.
        fp (np.ndarray):
            False positives per class.
        fn (np.ndarray):
            False negatives per class.
        det_tp (int):
            Class-agnostic true positives.
        det_fp (int):
            Class-agnostic false positives.
        det_fn (int):
            Class-agnostic false negatives.
        radius (float):
            The matching radius used.
    """
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    det_tp: int = 0
    det_fp: int = 0
    det_fn: int = 0
    radius: float = 6.0

    @classmethod
    def empty(cls, num_classes: int, radius: float) -> 'MatchReport':
        zeros = np.zeros(num_classes, dtype=np.int64)
        return cls(zeros.copy(), zeros.copy(), zeros.copy(), 0, 0, 0, radius)

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    @property
    def per_class_f1(self) -> np.ndarray:
        return _f1(self.tp, self.fp, self.fn)

    @property
    def average_f1(self) -> float:
        return float(self.per_class_f1.mean()) if self.num_classes else 0.0

    @property
    def detection_f1(self) -> float:
        return float(_f1(np.array(self.det_tp), np.array(self.det_fp), np.array(self.det_fn)))

    def __add__(self, other: 'MatchReport') -> 'MatchReport':
        assert self.num_classes == other.num_classes, ValueError("reports have different class counts")
        assert self.radius == other.radius, ValueError("reports use different matching radii")
        return MatchReport(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
            self.det_tp + other.det_tp, self.det_fp + other.det_fp, self.det_fn + other.det_fn,
            self.radius,
        )

    def rows(self) -> list[list[object]]:
        """CSV rows: one per class, then `average` and `detection`."""
        f1 = self.per_class_f1
        out: list[list[object]] = [
            [str(c + 1), int(self.tp[c]), int(self.fp[c]), int(self.fn[c]), float(f1[c])]
            for c in range(self.num_classes)
        ]
        out.append(['average', int(self.tp.sum()), int(self.fp.sum()), int(self.fn.sum()), self.average_f1])
        out.append(['detection', self.det_tp, self.det_fp, self.det_fn, self.detection_f1])
        return out

    def to_dict(self) -> dict[str, object]:
        return {
            'radius': self.radius,
            'per_class': {
                str(c + 1): {
                    'tp': int(self.tp[c]), 'fp': int(self.fp[c]), 'fn': int(self.fn[c]),
                    'f1': float(self.per_class_f1[c]),
                }
                for c in range(self.num_classes)
            },
            'average_f1': self.average_f1,
            'detection': {
                'tp': self.det_tp, 'fp': self.det_fp, 'fn': self.det_fn, 'f1': self.detection_f1,
            },
        }

    def write(self, csv_path: str | Path, json_path: str | Path | None = None) -> None:
        utils.write_csv(csv_path, ['class', 'tp', 'fp', 'fn', 'f1'], self.rows())
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n')


def count_matches(
    pred_points: np.ndarray,
    pred_classes: np.ndarray,
    gt_points: np.ndarray,
    gt_classes: np.ndarray,
    radius: float,
    num_classes: int,
) -> MatchReport:
    r"""Match one image within each class and once ignoring classes.

    Args:
        pred_points (np.ndarray):
            Predicted points [P, 2].
        pred_classes (np.ndarray):
            Predicted 1-based classes [P].
        gt_points (np.ndarray):
            Ground truth points [G, 2].
        gt_classes (np.ndarray):
            Ground truth 1-based classes [G].
        radius (float):
            The matching radius.
        num_classes (int):
            The class count C.

    Returns:
        MatchReport:
            The counts of this image.
    """
    pred_points = np.asarray(pred_points, dtype=np.float64).reshape(-1, 2)
    gt_points = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    pred_classes = np.asarray(pred_classes, dtype=np.int64).reshape(-1)
    gt_classes = np.asarray(gt_classes, dtype=np.int64).reshape(-1)
    for classes, name in ((pred_classes, 'predicted'), (gt_classes, 'ground truth')):
        if classes.size and (classes.min() < 1 or classes.max() > num_classes):
            raise ValueError(f"{name} classes must lie in [1, {num_classes}]")

    report = MatchReport.empty(num_classes, radius)
    for c in range(1, num_classes + 1):
        preds_c = pred_points[pred_classes == c]
        gts_c = gt_points[gt_classes == c]
        tp = len(match_one_to_one(preds_c, gts_c, radius))
        report.tp[c - 1] = tp
        report.fp[c - 1] = len(preds_c) - tp
        report.fn[c - 1] = len(gts_c) - tp

    det_tp = len(match_one_to_one(pred_points, gt_points, radius))
    report.det_tp = det_tp
    report.det_fp = len(pred_points) - det_tp
    report.det_fn = len(gt_points) - det_tp
    return report


def f1_report(pred_set: object, gt: object, radius: float, num_classes: int) -> MatchReport:
    """Distance-based F1 of one prediction set against one annotated image.

    Args:
        pred_set (PredictionSet):
            Anything exposing `points` [P, 2] and `classes` [P].
        gt (Sample):
            Anything exposing `points` [G, 2] and `labels` [G].
        radius (float):
            The matching radius.
        num_classes (int):
            The class count C.

    Returns:
        MatchReport:
            Per-class, average and detection scores.
    """
    return count_matches(pred_set.points, pred_set.classes, gt.points, gt.labels, radius, num_classes)


def dataset_report(pairs: Iterable[tuple[object, object]], radius: float, num_classes: int) -> MatchReport:
    """Sum per-image reports of (prediction set, annotation) pairs in the given order."""
    total = MatchReport.empty(num_classes, radius)
    for pred_set, gt in pairs:
        total = total + f1_report(pred_set, gt, radius, num_classes)
    return total


"""Curve Analytics
"""


def to_curve(values: Sequence[float], start: int = 1) -> list[CurvePoint]:
    return [CurvePoint(start + i, float(v)) for i, v in enumerate(values)]


def convergence_epochs(curve: Sequence[CurvePoint], fraction: float = 0.95) -> int:
    r"""The first epoch whose value reaches `fraction` of the final value.

    Args:
        curve (Sequence[CurvePoint]):
            A curve with strictly increasing epochs.
        fraction (float, optional):
            In (0, 1]. Defaults to 0.95.

    Returns:
        int:
            The smallest epoch e with value(e) >= fraction * value(last).

    Raises:
        ValueError:
            If the curve is empty, epochs are not increasing or `fraction` is out of range.
    """
    if not curve:
        raise ValueError("cannot measure convergence of an empty curve")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    epochs = [point.epoch for point in curve]
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise ValueError("curve epochs must be strictly increasing")

    target = fraction * curve[-1].value
    for point in curve:
        if point.value >= target:
            return point.epoch
    return curve[-1].epoch


def convergence_ratio(slow: Sequence[CurvePoint], fast: Sequence[CurvePoint], fraction: float = 0.95) -> float:
    """Ratio of epochs-to-fraction of two curves, e.g. classification over detection."""
    return convergence_epochs(slow, fraction) / convergence_epochs(fast, fraction)
