"""
Re-score KITTI-format predictions with a depth-uncertainty confidence and apply 3D NMS
"""
import logging
from dataclasses import replace
from pathlib import Path

from core.choices import ScoreMethod
from core.confidence import nms3d, score_detection
from core.exceptions import DomainError
from experiments.command_base import ExperimentCommand
from experiments.exceptions import ConfigError
from experiments.kitti_io import read_label_file, serialize_kitti_label
from experiments.serializers import detection_to_dict

logger = logging.getLogger(__name__)

CSV_HEADER = ('file', 'row', 'class_id', 'p_2d', 'sigma_d', 'delta_d', 'p_3d_given_2d', 'p_3d', 'kept')


class Command(ExperimentCommand):
    help = 'Fuse the 2D score with a depth confidence (iounc, vanilla or constant) and run 3D NMS'

    def add_command_arguments(self, parser):
        parser.add_argument('--predictions', required=True, help='KITTI prediction file or directory of files')
        parser.add_argument('--method', choices=ScoreMethod.values, default=ScoreMethod.IOUNC)
        parser.add_argument('--th', type=float, help='IoU threshold for the accepted depth drift')
        parser.add_argument('--nms-threshold', type=float, help='3D NMS IoU threshold')
        parser.add_argument('--no-nms', action='store_true', help='Keep every detection')

    def config_overrides(self, options):
        return {'iounc': {'th': options['th']}, 'nms': {'threshold': options['nms_threshold']}}

    def run(self, config, writer, options):
        source = Path(options['predictions'])
        files = sorted(source.glob('*.txt')) if source.is_dir() else [source]
        if not files:
            raise ConfigError(f'No prediction files found in {source}')
        method = ScoreMethod(options['method'])

        rows = []
        documents = {}
        total = kept_total = 0
        for path in files:
            records, detections = self._score_file(path, method, config)
            kept = detections if options['no_nms'] else nms3d(detections, config.nms.threshold, config.nms.iou_kind)
            kept_ids = {id(det) for det in kept}
            kept_records = []
            for row, (record, det) in enumerate(zip(records, detections)):
                is_kept = id(det) in kept_ids
                rows.append([
                    path.name, row, det.class_id, det.p_2d, det.sigma_d,
                    det.extras.get('delta_d'), det.p_3d_given_2d, det.p_3d, int(is_kept),
                ])
                if is_kept:
                    kept_records.append(replace(record, score=det.p_3d))
            target = f'labels/{path.name}' if source.is_dir() else 'scored.txt'
            writer.text(target, ''.join(serialize_kitti_label(record) + '\n' for record in kept_records))
            documents[path.name] = [detection_to_dict(det) for det in kept]
            total += len(detections)
            kept_total += len(kept)

        writer.json('detections.json', {
            'kind': 'detections',
            'method': method.value,
            'detections': [det for name in sorted(documents) for det in documents[name]],
            'files': {name: len(dets) for name, dets in sorted(documents.items())},
        })
        writer.csv('scores.csv', CSV_HEADER, rows)
        return f'Scored {total} detections with {method.value}; {kept_total} kept after NMS'

    def _score_file(self, path, method, config):
        records, detections = [], []
        for row, record in enumerate(read_label_file(path), 1):
            if record.ignorable:
                continue
            if record.score is None:
                raise ConfigError(f'{path.name} row {row}: prediction rows need a score column')
            if method != ScoreMethod.CONSTANT and record.sigma_d is None:
                raise ConfigError(
                    f'{path.name} row {row}: {method.value} scoring needs the sigma_d column',
                    errors={'file': path.name, 'row': row},
                )
            try:
                detection = score_detection(
                    record.to_box(), record.type, record.score, record.sigma_d, method, config.iounc,
                )
            except DomainError as exc:
                raise DomainError(f'{path.name} row {row}: {exc}') from exc
            records.append(record)
            detections.append(detection)
        logger.debug(f'{path.name}: scored {len(detections)} detections')
        return records, detections
