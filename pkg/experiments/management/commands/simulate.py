"""
Seeded synthetic scenes pushed through the full estimation and scoring pipeline
"""
import logging
from dataclasses import replace

from core.choices import ScoreMethod
from core.exceptions import DomainError
from core.simulator import ObjectDiagnostics, simulate_run
from experiments.command_base import ExperimentCommand
from experiments.kitti_io import calib_text, record_from_box, serialize_kitti_label
from experiments.serializers import simulation_document

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ('seed',) + tuple(ObjectDiagnostics.__dataclass_fields__) + ('depth_error',)


class Command(ExperimentCommand):
    help = 'Simulate scenes, noisy height estimates and scored detections for one or more seeds'
    stochastic = True

    def add_command_arguments(self, parser):
        parser.add_argument('--seeds', type=int, default=1, help='Number of consecutive master seeds')
        parser.add_argument('--scenes', type=int, default=50, help='Scenes per seed')
        parser.add_argument('--method', choices=ScoreMethod.values, default=ScoreMethod.IOUNC)
        parser.add_argument('--th', type=float, help='IoU threshold for the accepted depth drift')
        parser.add_argument('--classes', choices=['car', 'multi'], help='Class prior preset')
        parser.add_argument('--heteroscedastic', action='store_true', default=None,
                            help='Scale the 2D height noise with depth')
        parser.add_argument('--report-scale', type=float, help='Mis-scale reported sigmas (1 = calibrated)')
        parser.add_argument('--kitti', action='store_true', help='Also emit KITTI label, prediction and calib files')

    def config_overrides(self, options):
        return {
            'iounc': {'th': options['th']},
            'scene': {'classes': options['classes']},
            'noise': {'heteroscedastic': options['heteroscedastic'], 'report_scale': options['report_scale']},
        }

    def run(self, config, writer, options):
        method = ScoreMethod(options['method'])
        seeds = [options['seed'] + offset for offset in range(options['seeds'])]
        runs = []
        for seed in seeds:
            results = simulate_run(seed, options['scenes'], config.scene, config.noise, config.iounc)
            if method != ScoreMethod.IOUNC:
                results = [_rescored(result, method) for result in results]
            runs.append((seed, results))

        writer.json('simulation.json', simulation_document(runs, config, method))
        rows = []
        for seed, results in runs:
            for result in results:
                for diag in result.diagnostics:
                    values = diag.to_dict()
                    rows.append([seed] + [values[name] for name in DIAGNOSTIC_COLUMNS[1:]])
        writer.csv('diagnostics.csv', DIAGNOSTIC_COLUMNS, rows)
        if options['kitti']:
            self._write_kitti(writer, runs)
        return f'Simulated {len(rows)} objects over {len(seeds)} seed(s) x {options["scenes"]} scenes'

    def _write_kitti(self, writer, runs):
        for seed, results in runs:
            for result in results:
                stem = f'{seed}/{{}}/{result.scene.index:06d}.txt'
                camera = result.scene.camera
                labels = [
                    serialize_kitti_label(record_from_box(obj.class_id, obj.box, camera))
                    for obj in result.scene.objects
                ]
                predictions = []
                for sim in result.objects:
                    det = sim.detection
                    try:
                        record = record_from_box(det.class_id, det.box, camera, score=det.p_2d, sigma_d=det.sigma_d)
                    except DomainError:
                        logger.warning(f'Seed {seed} scene {result.scene.index}: detection behind the camera skipped')
                        continue
                    predictions.append(serialize_kitti_label(record))
                writer.text('kitti/' + stem.format('label_2'), ''.join(line + '\n' for line in labels))
                writer.text('kitti/' + stem.format('pred_2'), ''.join(line + '\n' for line in predictions))
                writer.text('kitti/' + stem.format('calib'), calib_text(camera))


def _rescored(result, method):
    """PipelineResult whose detections carry ``method`` confidences"""
    objects = tuple(
        replace(sim, detection=det) for sim, det in zip(result.objects, result.detections_for(method))
    )
    return replace(result, objects=objects)
