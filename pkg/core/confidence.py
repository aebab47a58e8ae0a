"""
Depth uncertainty to detection confidence.

The accepted depth drift delta_d of a predicted box is the largest depth
translation that keeps its IoU with itself above ``th``. IoUnC is the mass of
the Laplace depth belief inside [mu_d - delta_d, mu_d + delta_d].
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

from .choices import IoUKind, ScoreMethod
from .distributions import SQRT2
from .exceptions import DomainError
from .geometry3d import Box3D, box_iou, shift_depth

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IoUnCConfig:
    th: float = 0.7
    iou_kind: str = IoUKind.IOU_3D
    tolerance: float = 1e-4
    initial_step: float = 0.125
    cap_factor: float = 10.0

    def __post_init__(self):
        if not 0 < self.th < 1:
            raise DomainError(f'IoU threshold must lie in (0, 1), got {self.th}')
        if not self.tolerance > 0:
            raise DomainError(f'Search tolerance must be positive, got {self.tolerance}')
        if not self.initial_step > 0:
            raise DomainError(f'Initial bracket step must be positive, got {self.initial_step}')
        object.__setattr__(self, 'iou_kind', IoUKind(self.iou_kind))


def _check_probability(name, value):
    if not (math.isfinite(value) and 0.0 <= value <= 1.0):
        raise DomainError(f'{name} must be a probability in [0, 1], got {value}')


@dataclass(frozen=True)
class Detection:
    box: Box3D
    class_id: str
    p_2d: float
    p_3d_given_2d: float
    p_3d: float
    sigma_d: float = None
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _check_probability('p_2d', self.p_2d)
        _check_probability('p_3d_given_2d', self.p_3d_given_2d)
        _check_probability('p_3d', self.p_3d)
        if abs(self.p_3d - self.p_2d * self.p_3d_given_2d) > 1e-12:
            raise DomainError('p_3d must equal p_2d * p_3d_given_2d')

    @classmethod
    def fused(cls, box, class_id, p_2d, p_3d_given_2d, sigma_d=None, **extras):
        return cls(
            box=box,
            class_id=class_id,
            p_2d=p_2d,
            p_3d_given_2d=p_3d_given_2d,
            p_3d=fuse_scores(p_2d, p_3d_given_2d),
            sigma_d=sigma_d,
            extras=extras,
        )

    def rescored(self, p_3d_given_2d):
        return replace(
            self,
            p_3d_given_2d=p_3d_given_2d,
            p_3d=fuse_scores(self.p_2d, p_3d_given_2d),
        )


def delta_d(box, config=None):
    """
    Largest depth shift d' >= 0 with IoU(shift_depth(box, d'), box) >= th.

    The shift is bracketed by doubling from ``initial_step`` and then bisected
    to ``tolerance``. IoU is non-increasing in |d'| for a pure depth
    translation and symmetric in its sign.
    """
    config = config or IoUnCConfig()
    th = config.th
    cap = config.cap_factor * box.diagonal

    def passes(shift):
        return box_iou(shift_depth(box, shift), box, config.iou_kind) >= th

    if not passes(0.0):
        raise DomainError('Box does not overlap itself; check its dimensions')

    lo, hi = 0.0, config.initial_step
    while passes(hi):
        lo = hi
        if hi >= cap:
            logger.warning(f'delta_d bracket reached the cap of {cap:.3f} m')
            return cap
        hi = min(2.0 * hi, cap)

    while hi - lo > config.tolerance:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


def iounc(sigma_d, delta):
    """Laplace mass within +-delta of the mean: 1 - exp(-sqrt(2) * delta / sigma_d)"""
    if not sigma_d > 0:
        raise DomainError(f'sigma_d must be positive, got {sigma_d}')
    if delta < 0:
        raise DomainError(f'delta_d must be non-negative, got {delta}')
    return -math.expm1(-SQRT2 * delta / sigma_d)


def vanilla_unc(sigma_d):
    if sigma_d < 0:
        raise DomainError(f'sigma_d must be non-negative, got {sigma_d}')
    return math.exp(-sigma_d)


def fuse_scores(p_2d, p_3d_given_2d):
    _check_probability('p_2d', p_2d)
    _check_probability('p_3d_given_2d', p_3d_given_2d)
    return p_2d * p_3d_given_2d


def conditional_confidence(method, sigma_d, delta=None):
    """p_3d|2d under the given scoring method"""
    method = ScoreMethod(method)
    if method == ScoreMethod.IOUNC:
        if delta is None:
            raise DomainError('IoUnC scoring needs delta_d')
        return iounc(sigma_d, delta)
    if method == ScoreMethod.VANILLA:
        return vanilla_unc(sigma_d)
    return 1.0


def score_detection(box, class_id, p_2d, sigma_d, method=ScoreMethod.IOUNC, config=None):
    """Build a fused Detection for a predicted box and its depth uncertainty"""
    method = ScoreMethod(method)
    if method != ScoreMethod.CONSTANT and sigma_d is None:
        raise DomainError(f'Scoring method {method.value} needs sigma_d')
    delta = delta_d(box, config) if method == ScoreMethod.IOUNC else None
    p_cond = conditional_confidence(method, sigma_d, delta)
    return Detection.fused(box, class_id, p_2d, p_cond, sigma_d=sigma_d, delta_d=delta)


def nms3d(detections, iou_threshold, iou_kind=IoUKind.BEV):
    """
    Class-aware greedy NMS on 3D boxes.

    Detections are visited by descending p_3d (input order breaks ties); one is
    dropped when its IoU with an already kept detection of the same class
    exceeds ``iou_threshold``. The kept list is returned in visiting order.
    """
    for det in detections:
        if not math.isfinite(det.p_3d):
            raise DomainError('NMS needs finite scores')
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].p_3d, i))
    kept_by_class = defaultdict(list)
    kept = []
    for index in order:
        det = detections[index]
        peers = kept_by_class[det.class_id]
        if any(box_iou(det.box, other.box, iou_kind) > iou_threshold for other in peers):
            continue
        peers.append(det)
        kept.append(det)
    logger.debug(f'NMS kept {len(kept)} of {len(detections)} detections')
    return kept
