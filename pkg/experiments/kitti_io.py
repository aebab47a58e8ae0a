"""
KITTI object label and calibration files.

Label lines carry 15 ground-truth fields, a 16th score column for predictions
and, for this toolkit, an optional 17th column with the depth standard
deviation sigma_d. Canonical precision is two decimals for every float field,
an integer ``occluded`` flag and four decimals for score and sigma_d; lines in
that precision round-trip exactly.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path

from core.choices import Difficulty
from core.exceptions import DomainError
from core.geometry3d import Box3D, CameraIntrinsics, box_corners

from .exceptions import CalibrationFileError, KittiParseError

logger = logging.getLogger(__name__)

COLUMNS = (
    'type', 'truncated', 'occluded', 'alpha',
    'bbox_left', 'bbox_top', 'bbox_right', 'bbox_bottom',
    'height', 'width', 'length',
    'x', 'y', 'z', 'rotation_y',
    'score', 'sigma_d',
)
MIN_FIELDS = 15
MAX_FIELDS = len(COLUMNS)

DONT_CARE = 'DontCare'

# Minimum 2D box height (px), maximum occlusion and truncation per difficulty
DIFFICULTY_LIMITS = (
    (Difficulty.EASY, 40, 0, 0.15),
    (Difficulty.MODERATE, 25, 1, 0.30),
    (Difficulty.HARD, 25, 2, 0.50),
)


@dataclass(frozen=True)
class KittiLabelRecord:
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple
    dimensions: tuple
    location: tuple
    rotation_y: float
    score: float = None
    sigma_d: float = None

    @property
    def ignorable(self):
        return self.type == DONT_CARE

    @property
    def bbox_height(self):
        return self.bbox[3] - self.bbox[1]

    def to_box(self):
        h, w, l = self.dimensions
        x, y, z = self.location
        return Box3D(x=x, y=y, z=z, h=h, w=w, l=l, yaw=self.rotation_y)

    def difficulty(self):
        """Easiest KITTI difficulty bucket whose limits the object meets, or None"""
        for bucket, min_height, max_occlusion, max_truncation in DIFFICULTY_LIMITS:
            if (self.bbox_height >= min_height and self.occluded <= max_occlusion
                    and self.truncated <= max_truncation):
                return bucket
        return None

    def within(self, bucket):
        """KITTI buckets are cumulative: Moderate also contains the Easy objects"""
        if bucket == Difficulty.ALL:
            return True
        own = self.difficulty()
        order = [limits[0] for limits in DIFFICULTY_LIMITS]
        return own is not None and order.index(own) <= order.index(Difficulty(bucket))


def _parse_float(token, column, line_number):
    try:
        value = float(token)
    except ValueError:
        raise KittiParseError(
            f'Column {column + 1} ({COLUMNS[column]}) is not a number: {token!r}',
            column=column + 1, column_name=COLUMNS[column], line_number=line_number,
        ) from None
    if not math.isfinite(value):
        raise KittiParseError(
            f'Column {column + 1} ({COLUMNS[column]}) is not finite: {token!r}',
            column=column + 1, column_name=COLUMNS[column], line_number=line_number,
        )
    return value


def parse_kitti_label(line, line_number=None):
    """Parse one label line; unknown class strings are kept verbatim"""
    tokens = line.split()
    if len(tokens) < MIN_FIELDS:
        missing = len(tokens)
        raise KittiParseError(
            f'Expected at least {MIN_FIELDS} fields, got {len(tokens)}; '
            f'missing column {missing + 1} ({COLUMNS[missing]})',
            column=missing + 1, column_name=COLUMNS[missing], line_number=line_number,
        )
    if len(tokens) > MAX_FIELDS:
        raise KittiParseError(
            f'Expected at most {MAX_FIELDS} fields, got {len(tokens)}',
            column=MAX_FIELDS + 1, column_name=None, line_number=line_number,
        )
    numbers = [_parse_float(token, i, line_number) for i, token in enumerate(tokens) if i > 0]
    values = [tokens[0]] + numbers
    if values[2] != int(values[2]):
        raise KittiParseError(
            f'Column 3 (occluded) must be an integer, got {tokens[2]!r}',
            column=3, column_name='occluded', line_number=line_number,
        )
    record = KittiLabelRecord(
        type=values[0],
        truncated=values[1],
        occluded=int(values[2]),
        alpha=values[3],
        bbox=tuple(values[4:8]),
        dimensions=tuple(values[8:11]),
        location=tuple(values[11:14]),
        rotation_y=values[14],
        score=values[15] if len(values) > 15 else None,
        sigma_d=values[16] if len(values) > 16 else None,
    )
    if not record.ignorable:
        for offset, name in enumerate(('height', 'width', 'length')):
            if record.dimensions[offset] <= 0:
                raise KittiParseError(
                    f'Column {9 + offset} ({name}) must be positive for {record.type}',
                    column=9 + offset, column_name=name, line_number=line_number,
                )
    return record


def serialize_kitti_label(record):
    fields = [record.type, f'{record.truncated:.2f}', f'{record.occluded:d}', f'{record.alpha:.2f}']
    fields += [f'{value:.2f}' for value in record.bbox]
    fields += [f'{value:.2f}' for value in record.dimensions]
    fields += [f'{value:.2f}' for value in record.location]
    fields.append(f'{record.rotation_y:.2f}')
    if record.score is not None:
        fields.append(f'{record.score:.4f}')
        if record.sigma_d is not None:
            fields.append(f'{record.sigma_d:.4f}')
    elif record.sigma_d is not None:
        raise ValueError('sigma_d can only be written after a score column')
    return ' '.join(fields)


def read_label_file(path):
    records = []
    with open(path, encoding='utf-8') as handle:
        for line_number, line in enumerate(handle, 1):
            if line.strip():
                records.append(parse_kitti_label(line, line_number=line_number))
    logger.debug(f'Read {len(records)} label rows from {path}')
    return records


def write_label_file(path, records):
    lines = [serialize_kitti_label(record) + '\n' for record in records]
    Path(path).write_text(''.join(lines), encoding='utf-8')


def parse_calib_text(text):
    """Intrinsics from the P2 (left colour camera) projection row"""
    for line in text.splitlines():
        key, _, rest = line.partition(':')
        if key.strip() != 'P2':
            continue
        tokens = rest.split()
        if len(tokens) != 12:
            raise CalibrationFileError(f'P2 row must hold 12 numbers, got {len(tokens)}')
        try:
            matrix = [float(token) for token in tokens]
        except ValueError as exc:
            raise CalibrationFileError(f'P2 row is not numeric: {exc}') from None
        # skew and baseline entries are ignored
        return CameraIntrinsics(f=matrix[0], c_u=matrix[2], c_v=matrix[6])
    raise CalibrationFileError('Calibration has no P2 row')


def parse_kitti_calib(path):
    return parse_calib_text(Path(path).read_text(encoding='utf-8'))


def calib_text(camera):
    p2 = [camera.f, 0.0, camera.c_u, 0.0, 0.0, camera.f, camera.c_v, 0.0, 0.0, 0.0, 1.0, 0.0]
    row = ' '.join(f'{value:.12e}' for value in p2)
    return f'P2: {row}\n'


def write_kitti_calib(path, camera):
    Path(path).write_text(calib_text(camera), encoding='utf-8')


def image_bbox(box, camera):
    """Axis-aligned image rectangle of the projected box corners"""
    corners = box_corners(box)
    depth = corners[:, 2]
    if (depth <= 0).any():
        raise DomainError('Box extends behind the camera')
    u = camera.f * corners[:, 0] / depth + camera.c_u
    v = camera.f * corners[:, 1] / depth + camera.c_v
    return float(u.min()), float(v.min()), float(u.max()), float(v.max())


def record_from_box(class_id, box, camera, score=None, sigma_d=None):
    """Label record for a box, with observation angle and projected 2D box"""
    alpha = box.yaw - math.atan2(box.x, box.z)
    alpha = math.atan2(math.sin(alpha), math.cos(alpha))
    return KittiLabelRecord(
        type=class_id,
        truncated=0.0,
        occluded=0,
        alpha=alpha,
        bbox=image_bbox(box, camera),
        dimensions=(box.h, box.w, box.l),
        location=(box.x, box.y, box.z),
        rotation_y=box.yaw,
        score=score,
        sigma_d=sigma_d,
    )
