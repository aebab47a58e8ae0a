"""
Versioned JSON result schema.

Every document written by a command carries ``schema_version``; documents
read back (``evaluate`` reads the ``simulate`` output) are validated here and
rejected with ``SchemaError`` when they do not match.
"""
from dataclasses import dataclass

from rest_framework import serializers

from core.confidence import Detection
from core.geometry3d import Box3D
from core.simulator import ObjectDiagnostics

from .artifacts import SCHEMA_VERSION, read_json
from .exceptions import SchemaError
from .run_config import CameraSerializer


class BoxSerializer(serializers.Serializer):
    x = serializers.FloatField()
    y = serializers.FloatField()
    z = serializers.FloatField()
    h = serializers.FloatField()
    w = serializers.FloatField()
    l = serializers.FloatField()  # noqa: E741
    yaw = serializers.FloatField()

    def validate(self, attrs):
        if min(attrs['h'], attrs['w'], attrs['l']) <= 0:
            raise serializers.ValidationError('Box dimensions must be positive.')
        return attrs


class ProbabilityField(serializers.FloatField):
    def __init__(self, **kwargs):
        super().__init__(min_value=0.0, max_value=1.0, **kwargs)


class DetectionRecordSerializer(serializers.Serializer):
    class_id = serializers.CharField()
    box = BoxSerializer()
    p_2d = ProbabilityField()
    p_3d_given_2d = ProbabilityField()
    p_3d = ProbabilityField()
    sigma_d = serializers.FloatField(min_value=0.0, allow_null=True, default=None)
    delta_d = serializers.FloatField(min_value=0.0, allow_null=True, default=None)
    gt_index = serializers.IntegerField(min_value=0, allow_null=True, default=None)


class GroundTruthSerializer(serializers.Serializer):
    index = serializers.IntegerField(min_value=0)
    class_id = serializers.CharField()
    box = BoxSerializer()


class DiagnosticsSerializer(serializers.Serializer):
    scene = serializers.IntegerField(min_value=0)
    index = serializers.IntegerField(min_value=0)
    class_id = serializers.CharField()
    z_gt = serializers.FloatField()
    mu_d = serializers.FloatField()
    sigma_d = serializers.FloatField(min_value=0.0)
    sigma_p = serializers.FloatField(min_value=0.0)
    delta_d = serializers.FloatField(min_value=0.0)
    p_2d = ProbabilityField()
    localized = serializers.BooleanField()
    iounc = ProbabilityField()
    vanilla = ProbabilityField()
    h2d_gt = serializers.FloatField()
    mu_h2d = serializers.FloatField()
    sigma_h2d = serializers.FloatField(min_value=0.0)
    h3d_gt = serializers.FloatField()
    mu_h3d = serializers.FloatField()
    sigma_h3d = serializers.FloatField(min_value=0.0)


class SceneRecordSerializer(serializers.Serializer):
    index = serializers.IntegerField(min_value=0)
    camera = CameraSerializer()
    objects = GroundTruthSerializer(many=True)
    detections = DetectionRecordSerializer(many=True)
    diagnostics = DiagnosticsSerializer(many=True)


class SeedRunSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0)
    scenes = SceneRecordSerializer(many=True)


class VersionedDocumentSerializer(serializers.Serializer):
    schema_version = serializers.IntegerField()
    kind = serializers.CharField()

    document_kind = None

    def validate_schema_version(self, value):
        if value != SCHEMA_VERSION:
            raise serializers.ValidationError(f'Unsupported schema version {value}, expected {SCHEMA_VERSION}.')
        return value

    def validate_kind(self, value):
        if value != self.document_kind:
            raise serializers.ValidationError(f'Expected a {self.document_kind} document, got {value}.')
        return value


class SimulationDocumentSerializer(VersionedDocumentSerializer):
    document_kind = 'simulation'

    config_hash = serializers.CharField()
    method = serializers.CharField()
    th = serializers.FloatField()
    iou_kind = serializers.CharField()
    runs = SeedRunSerializer(many=True)


class DetectionsDocumentSerializer(VersionedDocumentSerializer):
    document_kind = 'detections'

    method = serializers.CharField()
    detections = DetectionRecordSerializer(many=True)


def validate_document(data, serializer_class):
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise SchemaError(f'Document does not match the {serializer_class.document_kind} schema', errors=serializer.errors)
    return serializer.validated_data


def load_document(path, serializer_class):
    try:
        data = read_json(path)
    except (OSError, ValueError) as exc:
        raise SchemaError(f'Cannot read {path}: {exc}') from exc
    return validate_document(data, serializer_class)


def detection_to_dict(detection, gt_index=None):
    return {
        'class_id': detection.class_id,
        'box': detection.box.to_dict(),
        'p_2d': detection.p_2d,
        'p_3d_given_2d': detection.p_3d_given_2d,
        'p_3d': detection.p_3d,
        'sigma_d': detection.sigma_d,
        'delta_d': detection.extras.get('delta_d'),
        'gt_index': gt_index,
    }


def detection_from_dict(data):
    """Rebuild a Detection; p_3d is re-fused from the stored factors"""
    return Detection.fused(
        Box3D.from_dict(data['box']),
        data['class_id'],
        data['p_2d'],
        data['p_3d_given_2d'],
        sigma_d=data.get('sigma_d'),
        delta_d=data.get('delta_d'),
    )


def diagnostics_from_dict(data):
    return ObjectDiagnostics(**{name: data[name] for name in DiagnosticsSerializer().fields})


def simulation_document(runs, config, method):
    """
    Simulation output: ``runs`` is a list of (seed, [PipelineResult]) pairs.
    Detections keep the order of the ground truth they were generated from.
    """
    return {
        'kind': SimulationDocumentSerializer.document_kind,
        'config_hash': config.config_hash,
        'method': str(method.value if hasattr(method, 'value') else method),
        'th': config.iounc.th,
        'iou_kind': config.iounc.iou_kind.value,
        'runs': [
            {
                'seed': seed,
                'scenes': [
                    {
                        'index': result.scene.index,
                        'camera': {
                            'f': result.scene.camera.f,
                            'c_u': result.scene.camera.c_u,
                            'c_v': result.scene.camera.c_v,
                        },
                        'objects': [obj.to_dict() for obj in result.scene.objects],
                        'detections': [
                            detection_to_dict(sim.detection, gt_index=sim.gt.index) for sim in result.objects
                        ],
                        'diagnostics': [diag.to_dict() for diag in result.diagnostics],
                    }
                    for result in results
                ],
            }
            for seed, results in runs
        ],
    }


@dataclass(frozen=True)
class StoredFrame:
    """One scene read back from a simulation document"""
    detections: tuple
    ground_truth: tuple


@dataclass(frozen=True)
class StoredRun:
    seed: int
    frames: tuple
    diagnostics: tuple


def load_simulation(path):
    """Validated simulation document as (document, [StoredRun])"""
    document = load_document(path, SimulationDocumentSerializer)
    runs = []
    for run in document['runs']:
        frames, diagnostics = [], []
        for scene in run['scenes']:
            frames.append(StoredFrame(
                detections=tuple(detection_from_dict(det) for det in scene['detections']),
                ground_truth=tuple((obj['class_id'], Box3D.from_dict(obj['box'])) for obj in scene['objects']),
            ))
            diagnostics.extend(diagnostics_from_dict(diag) for diag in scene['diagnostics'])
        runs.append(StoredRun(seed=run['seed'], frames=tuple(frames), diagnostics=tuple(diagnostics)))
    return document, runs
