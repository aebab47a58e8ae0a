"""
AP11 / AP40 per scoring method, calibration report and threshold sweep.

Reads a ``simulate`` output (``--input``, ``--run`` or the latest succeeded
simulate run in the ledger), or a pair of KITTI label directories.
"""
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from core.choices import Difficulty, IoUKind, ScoreMethod
from core.confidence import Detection, conditional_confidence, delta_d, iounc
from core.evaluation import calibration_report, drop_ignored, evaluate_frames, match_threshold, ranking_agreement
from experiments.command_base import ExperimentCommand, parse_float_list
from experiments.exceptions import ConfigError
from experiments.kitti_io import read_label_file
from experiments.models import ExperimentRun
from experiments.serializers import load_simulation

logger = logging.getLogger(__name__)

AP_HEADER = ('method', 'seed', 'class_id', 'iou_threshold', 'ap11', 'ap40', 'num_gt', 'num_det')
SUMMARY_HEADER = ('method', 'class_id', 'iou_threshold', 'ap11', 'ap40', 'seeds')
SWEEP_HEADER = ('th', 'class_id', 'ap11', 'ap40', 'kendall_tau')


class Command(ExperimentCommand):
    help = 'Evaluate simulated or KITTI-format detections: AP per method, calibration and th sweep'

    def add_command_arguments(self, parser):
        parser.add_argument('--input', help='simulation.json written by simulate')
        parser.add_argument('--run', type=int, help='Ledger id of a simulate run')
        parser.add_argument('--gt-dir', help='KITTI ground-truth label directory')
        parser.add_argument('--pred-dir', help='KITTI prediction directory (scores used as-is)')
        parser.add_argument('--difficulty', choices=Difficulty.values, default=Difficulty.ALL)
        parser.add_argument('--methods', default=','.join(ScoreMethod.values), help='Comma list of scoring methods')
        parser.add_argument('--iou-kind', choices=IoUKind.values, default=IoUKind.IOU_3D, help='Matching IoU')
        parser.add_argument('--th', help='IoU thresholds to sweep for IoUnC, e.g. 0.5,0.6,0.7,0.8,0.9')

    def run(self, config, writer, options):
        iou_kind = IoUKind(options['iou_kind'])
        if options['gt_dir']:
            return self._evaluate_kitti(writer, options, iou_kind)

        path = self._simulation_path(options)
        document, runs = load_simulation(path)
        methods = [ScoreMethod(name.strip()) for name in options['methods'].split(',') if name.strip()]
        classes = sorted({class_id for run in runs for frame in run.frames for class_id, _ in frame.ground_truth})

        per_seed, summary = [], []
        for method in methods:
            results = {class_id: [] for class_id in classes}
            for run in runs:
                frames = [_rescored_frame(frame, method) for frame in run.frames]
                for class_id in classes:
                    evaluation = evaluate_frames(frames, class_id, iou_kind=iou_kind)
                    results[class_id].append(evaluation)
                    per_seed.append([
                        method.value, run.seed, class_id, evaluation.iou_threshold,
                        evaluation.ap11, evaluation.ap40, evaluation.num_gt, evaluation.num_det,
                    ])
            for class_id in classes:
                evaluations = results[class_id]
                summary.append({
                    'method': method.value,
                    'class_id': class_id,
                    'iou_threshold': evaluations[0].iou_threshold,
                    'ap11': float(np.mean([e.ap11 for e in evaluations])),
                    'ap40': float(np.mean([e.ap40 for e in evaluations])),
                    'seeds': len(evaluations),
                })

        report = calibration_report([diag for run in runs for diag in run.diagnostics])
        calibration = {
            'count': report.count,
            'spearman_rho': report.spearman_rho,
            'iounc_coverage': report.iounc_coverage,
            'mean_iounc': report.mean_iounc,
            'coverage': [{'nominal': row.nominal, 'empirical': row.empirical} for row in report.rows],
        }

        sweep = []
        if options['th']:
            sweep = self._threshold_sweep(runs, classes, parse_float_list(options['th']), config, iou_kind)

        writer.json('evaluation.json', {
            'source': {'config_hash': document['config_hash'], 'th': document['th'], 'iou_kind': document['iou_kind']},
            'iou_kind': iou_kind.value,
            'summary': summary,
            'calibration': calibration,
            'th_sweep': sweep,
        })
        writer.csv('ap.csv', AP_HEADER, per_seed)
        writer.csv('ap_summary.csv', SUMMARY_HEADER, [[row[name] for name in SUMMARY_HEADER] for row in summary])
        writer.csv(
            'coverage.csv',
            ('nominal', 'empirical'),
            [[row.nominal, row.empirical] for row in report.rows] + [['iounc', report.iounc_coverage]],
        )
        if sweep:
            writer.csv('th_sweep.csv', SWEEP_HEADER, [[row[name] for name in SWEEP_HEADER] for row in sweep])

        for row in summary:
            self.stdout.write(f'{row["method"]:>9} {row["class_id"]:<12} AP11={row["ap11"]:6.2f} AP40={row["ap40"]:6.2f}')
        return f'Evaluated {len(runs)} seed(s); Spearman rho(sigma_d, |error|) = {report.spearman_rho:.3f}'

    def _simulation_path(self, options):
        if options['input']:
            return Path(options['input'])
        if options['run'] is not None:
            run = ExperimentRun.objects.filter(pk=options['run'], command='simulate').first()
            if run is None:
                raise ConfigError(f'No simulate run with id {options["run"]} in the ledger')
        else:
            run = ExperimentRun.latest_succeeded('simulate')
            if run is None:
                raise ConfigError('No succeeded simulate run in the ledger; pass --input or --run')
        logger.info(f'Evaluating simulate run #{run.pk} from {run.output_dir}')
        return Path(run.output_dir) / 'simulation.json'

    def _threshold_sweep(self, runs, classes, thresholds, config, iou_kind):
        """Recompute delta_d and IoUnC per threshold; rank agreement is against the configured th"""
        cache = {config.iounc.th: self._iounc_scores(runs, config.iounc)}
        reference = cache[config.iounc.th]
        rows = []
        for th in thresholds:
            if th not in cache:
                cache[th] = self._iounc_scores(runs, replace(config.iounc, th=th))
            scores = cache[th]
            tau = ranking_agreement(_pooled(scores), _pooled(reference))
            for class_id in classes:
                evaluations = [
                    evaluate_frames(frames, class_id, iou_kind=iou_kind) for frames in scores
                ]
                rows.append({
                    'th': th,
                    'class_id': class_id,
                    'ap11': float(np.mean([e.ap11 for e in evaluations])),
                    'ap40': float(np.mean([e.ap40 for e in evaluations])),
                    'kendall_tau': tau,
                })
            logger.info(f'th={th:.2f}: Kendall tau against th={config.iounc.th:.2f} is {tau:.4f}')
        return rows

    def _iounc_scores(self, runs, iounc_config):
        """Per run, frames whose detections are re-scored with IoUnC at ``iounc_config.th``"""
        rescored_runs = []
        for run in runs:
            frames = []
            for frame in run.frames:
                detections = []
                for det in frame.detections:
                    shift = delta_d(det.box, iounc_config)
                    detections.append(replace(det.rescored(iounc(det.sigma_d, shift)), extras={'delta_d': shift}))
                frames.append((detections, list(frame.ground_truth)))
            rescored_runs.append(frames)
        return rescored_runs

    def _evaluate_kitti(self, writer, options, iou_kind):
        gt_dir = Path(options['gt_dir'])
        pred_dir = Path(options['pred_dir'] or '')
        if not options['pred_dir'] or not gt_dir.is_dir() or not pred_dir.is_dir():
            raise ConfigError('--gt-dir and --pred-dir must both be existing directories')
        bucket = Difficulty(options['difficulty'])

        frames = []
        classes = set()
        for gt_path in sorted(gt_dir.glob('*.txt')):
            included, ignored = [], []
            for record in read_label_file(gt_path):
                if record.ignorable:
                    continue
                target = included if record.within(bucket) else ignored
                target.append((record.type, record.to_box()))
                classes.add(record.type)
            pred_path = pred_dir / gt_path.name
            predictions = []
            if pred_path.exists():
                for record in read_label_file(pred_path):
                    if record.ignorable:
                        continue
                    if record.score is None:
                        raise ConfigError(f'{pred_path.name}: prediction rows need a score column')
                    predictions.append(Detection.fused(
                        record.to_box(), record.type, record.score, 1.0, sigma_d=record.sigma_d,
                    ))
            frames.append((predictions, included, ignored))
        if not frames:
            raise ConfigError(f'No label files in {gt_dir}')

        summary = []
        for class_id in sorted(classes):
            threshold = match_threshold(class_id)
            class_frames = []
            for predictions, included, ignored in frames:
                ignored_boxes = [box for gt_class, box in ignored if gt_class == class_id]
                kept = drop_ignored(
                    [det for det in predictions if det.class_id == class_id], ignored_boxes, threshold, iou_kind,
                )
                class_frames.append((kept, included))
            evaluation = evaluate_frames(class_frames, class_id, threshold, iou_kind)
            summary.append(evaluation.to_dict())

        writer.json('evaluation.json', {
            'source': {'gt_dir': str(gt_dir), 'pred_dir': str(pred_dir), 'difficulty': bucket.value},
            'iou_kind': iou_kind.value,
            'summary': summary,
        })
        writer.csv(
            'ap.csv',
            ('class_id', 'iou_threshold', 'ap11', 'ap40', 'num_gt', 'num_det'),
            [[row['class_id'], row['iou_threshold'], row['ap11'], row['ap40'], row['num_gt'], row['num_det']]
             for row in summary],
        )
        for row in summary:
            self.stdout.write(f'{row["class_id"]:<12} AP11={row["ap11"]:6.2f} AP40={row["ap40"]:6.2f}')
        return f'Evaluated {len(frames)} frame(s) at difficulty {bucket.value}'


def _rescored_frame(frame, method):
    detections = [
        det.rescored(conditional_confidence(method, det.sigma_d, det.extras.get('delta_d')))
        for det in frame.detections
    ]
    return detections, list(frame.ground_truth)


def _pooled(runs):
    return [det.p_3d for frames in runs for detections, _ in frames for det in detections]
