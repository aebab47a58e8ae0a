"""
Detection evaluation: greedy matching, precision-recall, AP11 / AP40 and
uncertainty calibration reporting.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .choices import IoUKind
from .exceptions import DomainError
from .geometry3d import box_iou

logger = logging.getLogger(__name__)

RECALL_POINTS = {
    11: np.linspace(0.0, 1.0, 11),
    40: np.arange(1, 41) / 40.0,
}

# Matching IoU thresholds per class; anything unlisted uses DEFAULT_MATCH_THRESHOLD
MATCH_THRESHOLDS = {'Car': 0.7}
DEFAULT_MATCH_THRESHOLD = 0.5

NOMINAL_COVERAGE = (0.5, 1.0 - math.exp(-1.0), 0.8, 0.9)


def match_threshold(class_id):
    return MATCH_THRESHOLDS.get(class_id, DEFAULT_MATCH_THRESHOLD)


@dataclass(frozen=True)
class MatchResult:
    """Per-detection (gt index or None, IoU at match) and per-GT coverage"""
    det_matches: tuple
    det_ious: tuple
    gt_covered: tuple
    scores: tuple

    @property
    def true_positives(self):
        return sum(1 for gt_index in self.det_matches if gt_index is not None)


def match(detections, gts, iou_threshold, iou_kind=IoUKind.IOU_3D):
    """
    Greedy one-to-one matching of one class in one frame.

    Detections are processed by descending p_3d (input order breaks ties); each
    takes the uncovered ground truth with the highest IoU, provided that IoU
    reaches ``iou_threshold``.
    """
    det_matches = [None] * len(detections)
    det_ious = [0.0] * len(detections)
    covered = [False] * len(gts)
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].p_3d, i))
    for det_index in order:
        box = detections[det_index].box
        best_gt, best_iou = None, -1.0
        for gt_index, gt_box in enumerate(gts):
            if covered[gt_index]:
                continue
            overlap = box_iou(box, gt_box, iou_kind)
            if overlap >= iou_threshold and overlap > best_iou:
                best_gt, best_iou = gt_index, overlap
        if best_gt is not None:
            covered[best_gt] = True
            det_matches[det_index] = best_gt
            det_ious[det_index] = best_iou
    return MatchResult(
        det_matches=tuple(det_matches),
        det_ious=tuple(det_ious),
        gt_covered=tuple(covered),
        scores=tuple(det.p_3d for det in detections),
    )


@dataclass(frozen=True)
class PRCurve:
    precision: np.ndarray
    recall: np.ndarray
    scores: np.ndarray
    num_gt: int

    @classmethod
    def from_matches(cls, matches):
        """Pool per-frame match results into one score-sorted sweep"""
        scores, hits = [], []
        num_gt = 0
        for result in matches:
            num_gt += len(result.gt_covered)
            scores.extend(result.scores)
            hits.extend(gt_index is not None for gt_index in result.det_matches)
        scores = np.asarray(scores, dtype=float)
        hits = np.asarray(hits, dtype=bool)
        order = np.argsort(-scores, kind='stable')
        tp = np.cumsum(hits[order])
        fp = np.cumsum(~hits[order])
        precision = tp / np.maximum(tp + fp, 1)
        recall = tp / num_gt if num_gt else np.zeros_like(tp, dtype=float)
        return cls(precision=precision.astype(float), recall=recall.astype(float), scores=scores[order], num_gt=num_gt)


def ap(curve, points=40):
    """Mean interpolated precision at the 11 or 40 recall points, in percent"""
    if points not in RECALL_POINTS:
        raise DomainError(f'AP is defined for 11 or 40 recall points, got {points}')
    if curve.num_gt == 0 or curve.precision.size == 0:
        return 0.0
    interpolated = []
    for r in RECALL_POINTS[points]:
        reached = curve.precision[curve.recall >= r - 1e-12]
        interpolated.append(reached.max() if reached.size else 0.0)
    return float(np.mean(interpolated) * 100.0)


@dataclass(frozen=True)
class ClassEvaluation:
    class_id: str
    iou_threshold: float
    ap11: float
    ap40: float
    num_gt: int
    num_det: int

    def to_dict(self):
        return {
            'class_id': self.class_id,
            'iou_threshold': self.iou_threshold,
            'ap11': self.ap11,
            'ap40': self.ap40,
            'num_gt': self.num_gt,
            'num_det': self.num_det,
        }


def evaluate_frames(frames, class_id, iou_threshold=None, iou_kind=IoUKind.IOU_3D):
    """
    AP of one class over frames given as (detections, ground-truth boxes) pairs.

    Only detections and ground truth of ``class_id`` are considered; ground
    truth entries are (class_id, box) pairs.
    """
    iou_threshold = match_threshold(class_id) if iou_threshold is None else iou_threshold
    matches = []
    num_det = 0
    for detections, gts in frames:
        dets = [det for det in detections if det.class_id == class_id]
        boxes = [box for gt_class, box in gts if gt_class == class_id]
        num_det += len(dets)
        matches.append(match(dets, boxes, iou_threshold, iou_kind))
    curve = PRCurve.from_matches(matches)
    return ClassEvaluation(
        class_id=class_id,
        iou_threshold=iou_threshold,
        ap11=ap(curve, 11),
        ap40=ap(curve, 40),
        num_gt=curve.num_gt,
        num_det=num_det,
    )


@dataclass(frozen=True)
class CoverageRow:
    nominal: float
    empirical: float


@dataclass(frozen=True)
class CalibrationReport:
    rows: tuple
    spearman_rho: float
    iounc_coverage: float
    mean_iounc: float
    count: int

    def coverage_at(self, nominal):
        for row in self.rows:
            if math.isclose(row.nominal, nominal, abs_tol=1e-3):
                return row.empirical
        raise KeyError(nominal)


def calibration_report(diagnostics, nominal_levels=NOMINAL_COVERAGE):
    """
    Empirical coverage of the Laplace depth intervals and the rank correlation
    between sigma_d and the absolute depth error.

    For a nominal level q the interval is mu_d +- b * ln(1 / (1 - q)) with
    b = sigma_d / sqrt2. The IoUnC row compares the coverage of
    [mu_d - delta_d, mu_d + delta_d] with the mean IoUnC.
    """
    rows = list(diagnostics)
    if not rows:
        raise DomainError('Calibration needs at least one diagnostic row')
    sigma = np.array([row.sigma_d for row in rows], dtype=float)
    error = np.abs(np.array([row.z_gt - row.mu_d for row in rows], dtype=float))
    delta = np.array([row.delta_d for row in rows], dtype=float)
    confidence = np.array([row.iounc for row in rows], dtype=float)

    coverage = []
    for level in nominal_levels:
        half_width = -(sigma / math.sqrt(2.0)) * math.log1p(-level)
        coverage.append(CoverageRow(nominal=float(level), empirical=float(np.mean(error <= half_width))))

    if np.ptp(sigma) == 0 or np.ptp(error) == 0:
        rho = 0.0
    else:
        rho = float(stats.spearmanr(sigma, error).statistic)
    return CalibrationReport(
        rows=tuple(coverage),
        spearman_rho=rho,
        iounc_coverage=float(np.mean(error <= delta)),
        mean_iounc=float(np.mean(confidence)),
        count=len(rows),
    )


def ranking_agreement(scores_a, scores_b):
    """Kendall tau between two score assignments over the same detections"""
    scores_a = np.asarray(scores_a, dtype=float)
    scores_b = np.asarray(scores_b, dtype=float)
    if scores_a.shape != scores_b.shape:
        raise DomainError('Score lists must have the same length')
    if scores_a.size < 2:
        return 1.0
    return float(stats.kendalltau(scores_a, scores_b).statistic)


def drop_ignored(detections, ignored_boxes, iou_threshold, iou_kind=IoUKind.IOU_3D):
    """
    Remove detections that match an ignored ground truth (another difficulty
    bucket or a DontCare region); they count neither as true nor false positives.
    """
    if not ignored_boxes:
        return list(detections)
    return [
        det for det in detections
        if all(box_iou(det.box, box, iou_kind) < iou_threshold for box in ignored_boxes)
    ]
