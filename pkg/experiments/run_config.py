"""
Run configuration.

A run-config file is JSON with optional ``scene``, ``noise``, ``iounc``,
``nms``, ``loss`` and ``htl`` sections. It is validated by
``RunConfigSerializer``; anything left out takes the project defaults from
settings. Together with the command's ``--seed`` the resulting ``RunConfig``
fully determines a run.
"""
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from core.choices import DistributionFamily, IoUKind
from core.confidence import IoUnCConfig
from core.exceptions import DomainError
from core.geometry3d import CameraIntrinsics
from core.htl import DEFAULT_TASK_GRAPH
from core.simulator import CAR_PRIORS, KITTI_CAMERA, MULTI_CLASS_PRIORS, ClassPrior, NoiseModel, SceneConfig

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

PRIOR_PRESETS = {
    'car': CAR_PRIORS,
    'multi': MULTI_CLASS_PRIORS,
}


@dataclass(frozen=True)
class NMSConfig:
    threshold: float = 0.25
    iou_kind: str = IoUKind.BEV

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise DomainError(f'NMS threshold must lie in (0, 1], got {self.threshold}')
        object.__setattr__(self, 'iou_kind', IoUKind(self.iou_kind))


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.5
    family: str = DistributionFamily.LAPLACE

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise DomainError(f'beta must lie in [0, 1], got {self.beta}')
        object.__setattr__(self, 'family', DistributionFamily(self.family))


@dataclass(frozen=True)
class HTLConfig:
    total_epochs: int = 100
    window: int = 5
    graph: dict = field(default_factory=lambda: {task: sorted(pre) for task, pre in DEFAULT_TASK_GRAPH.items()})

    def task_graph(self):
        return {task: set(pre) for task, pre in self.graph.items()}


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    iounc: IoUnCConfig = field(default_factory=IoUnCConfig)
    nms: NMSConfig = field(default_factory=NMSConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    htl: HTLConfig = field(default_factory=HTLConfig)
    output_dir: str = ''

    def to_dict(self):
        return _plain(asdict(self))

    def hashable_dict(self):
        """Everything that influences results; the output location does not"""
        data = self.to_dict()
        data.pop('output_dir')
        return data

    @property
    def config_hash(self):
        return config_hash(self.hashable_dict())


def _plain(value):
    """JSON-ready copy: tuples become lists, choices become their values"""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, str):
        return str(value.value) if hasattr(value, 'value') else value
    return value


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(',', ':'), allow_nan=False)


def config_hash(data):
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


class RangeField(serializers.ListField):
    """Two ordered numbers"""

    def __init__(self, **kwargs):
        super().__init__(child=serializers.FloatField(), min_length=2, max_length=2, **kwargs)

    def to_internal_value(self, data):
        lo, hi = super().to_internal_value(data)
        if lo > hi:
            raise serializers.ValidationError('Range lower bound exceeds upper bound.')
        return lo, hi


class CameraSerializer(serializers.Serializer):
    f = serializers.FloatField(min_value=0.0)
    c_u = serializers.FloatField()
    c_v = serializers.FloatField()

    def validate_f(self, value):
        if value <= 0:
            raise serializers.ValidationError('Focal length must be positive.')
        return value


class ClassPriorSerializer(serializers.Serializer):
    h = serializers.FloatField()
    w = serializers.FloatField()
    l = serializers.FloatField()  # noqa: E741
    weight = serializers.FloatField(default=1.0)

    def validate(self, attrs):
        if min(attrs.values()) <= 0:
            raise serializers.ValidationError('Class priors must be positive.')
        return attrs


class SceneSerializer(serializers.Serializer):
    min_objects = serializers.IntegerField(min_value=1, default=SceneConfig.min_objects)
    max_objects = serializers.IntegerField(min_value=1, default=SceneConfig.max_objects)
    depth_range = RangeField(default=list(SceneConfig.depth_range))
    classes = serializers.ChoiceField(choices=sorted(PRIOR_PRESETS), default='car')
    priors = serializers.DictField(child=ClassPriorSerializer(), required=False)
    dim_jitter = serializers.FloatField(min_value=0.0, default=SceneConfig.dim_jitter)
    yaw_range = RangeField(default=[-math.pi, math.pi])
    camera = CameraSerializer(required=False)
    image_width = serializers.IntegerField(min_value=1, default=SceneConfig.image_width)
    camera_height = serializers.FloatField(default=SceneConfig.camera_height)
    attempts_per_object = serializers.IntegerField(min_value=1, default=SceneConfig.attempts_per_object)

    def validate(self, attrs):
        if attrs['min_objects'] > attrs['max_objects']:
            raise serializers.ValidationError({'min_objects': 'Must not exceed max_objects.'})
        if attrs['depth_range'][0] <= 0:
            raise serializers.ValidationError({'depth_range': 'Depths must be positive.'})
        return attrs


class NoiseSerializer(serializers.Serializer):
    preset = serializers.ChoiceField(choices=['Overall', 'Car', 'Pedestrian', 'Cyclist'], default='Overall')
    h2d_sigma = serializers.FloatField(min_value=0.0, required=False)
    h3d_sigma = serializers.FloatField(min_value=0.0, required=False)
    bias_mu = serializers.FloatField(default=NoiseModel.bias_mu)
    bias_sigma = serializers.FloatField(min_value=0.0, default=NoiseModel.bias_sigma)
    p2d_offset = serializers.FloatField(default=NoiseModel.p2d_offset)
    p2d_slope = serializers.FloatField(default=NoiseModel.p2d_slope)
    p2d_noise = serializers.FloatField(min_value=0.0, default=NoiseModel.p2d_noise)
    heteroscedastic = serializers.BooleanField(default=NoiseModel.heteroscedastic)
    reference_depth = serializers.FloatField(default=NoiseModel.reference_depth)
    report_scale = serializers.FloatField(default=NoiseModel.report_scale)
    sigma_floor = serializers.FloatField(default=NoiseModel.sigma_floor)
    localization_failures = serializers.BooleanField(default=NoiseModel.localization_failures)
    failure_offset = serializers.FloatField(min_value=1.5, default=NoiseModel.failure_offset)

    def validate(self, attrs):
        for name in ('reference_depth', 'report_scale', 'sigma_floor'):
            if attrs[name] <= 0:
                raise serializers.ValidationError({name: 'Must be positive.'})
        return attrs


class IoUnCSerializer(serializers.Serializer):
    th = serializers.FloatField(default=lambda: settings.GUP_IOUNC_THRESHOLD)
    iou_kind = serializers.ChoiceField(choices=IoUKind.choices, default=IoUKind.IOU_3D)
    tolerance = serializers.FloatField(default=IoUnCConfig.tolerance)
    initial_step = serializers.FloatField(default=IoUnCConfig.initial_step)
    cap_factor = serializers.FloatField(default=IoUnCConfig.cap_factor)

    def validate_th(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('Threshold must lie strictly between 0 and 1.')
        return value


class NMSSerializer(serializers.Serializer):
    threshold = serializers.FloatField(default=lambda: settings.GUP_NMS_THRESHOLD)
    iou_kind = serializers.ChoiceField(choices=IoUKind.choices, default=IoUKind.BEV)

    def validate_threshold(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError('Threshold must lie in (0, 1].')
        return value


class LossSerializer(serializers.Serializer):
    beta = serializers.FloatField(min_value=0.0, max_value=1.0, default=lambda: settings.GUP_BETA)
    family = serializers.ChoiceField(choices=DistributionFamily.choices, default=DistributionFamily.LAPLACE)


class HTLSerializer(serializers.Serializer):
    total_epochs = serializers.IntegerField(min_value=1, default=100)
    window = serializers.IntegerField(min_value=1, default=lambda: settings.GUP_HTL_WINDOW)
    graph = serializers.DictField(child=serializers.ListField(child=serializers.CharField()), required=False)


class RunConfigSerializer(serializers.Serializer):
    scene = SceneSerializer(default=dict)
    noise = NoiseSerializer(default=dict)
    iounc = IoUnCSerializer(default=dict)
    nms = NMSSerializer(default=dict)
    loss = LossSerializer(default=dict)
    htl = HTLSerializer(default=dict)
    output_dir = serializers.CharField(default=lambda: settings.GUP_OUTPUT_DIR)


def _merge(base, overrides):
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = _merge(current if isinstance(current, dict) else {}, value)
        else:
            merged[key] = value
    return merged


def _section(data, name):
    """Validated data of a nested section; serializer defaults skip nested validation"""
    section = data.get(name)
    if isinstance(section, dict) and section:
        return section
    nested = RunConfigSerializer().fields[name]
    serializer = type(nested)(data={})
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


def build_run_config(data):
    """RunConfig from validated serializer data"""
    scene = _section(data, 'scene')
    noise = dict(_section(data, 'noise'))
    iounc = _section(data, 'iounc')
    nms = _section(data, 'nms')
    loss = _section(data, 'loss')
    htl = _section(data, 'htl')

    if scene.get('priors'):
        priors = {name: ClassPrior(**dict(prior)) for name, prior in scene['priors'].items()}
    else:
        priors = dict(PRIOR_PRESETS[scene['classes']])
    camera = CameraIntrinsics(**dict(scene['camera'])) if scene.get('camera') else KITTI_CAMERA
    scene_config = SceneConfig(
        min_objects=scene['min_objects'],
        max_objects=scene['max_objects'],
        depth_range=tuple(scene['depth_range']),
        priors=priors,
        dim_jitter=scene['dim_jitter'],
        yaw_range=tuple(scene['yaw_range']),
        camera=camera,
        image_width=scene['image_width'],
        camera_height=scene['camera_height'],
        attempts_per_object=scene['attempts_per_object'],
    )

    preset = noise.pop('preset')
    noise_model = NoiseModel.for_class(preset, **noise)

    htl_options = {'total_epochs': htl['total_epochs'], 'window': htl['window']}
    if htl.get('graph'):
        htl_options['graph'] = {task: sorted(pre) for task, pre in htl['graph'].items()}
    htl_config = HTLConfig(**htl_options)

    return RunConfig(
        scene=scene_config,
        noise=noise_model,
        iounc=IoUnCConfig(**dict(iounc)),
        nms=NMSConfig(**dict(nms)),
        loss=LossConfig(**dict(loss)),
        htl=htl_config,
        output_dir=str(data['output_dir']),
    )


def load_run_config(path=None, overrides=None):
    """
    Read, merge and validate a run configuration.

    ``overrides`` is a nested dict with the same shape as the file (command
    flags); ``None`` values are ignored so unset flags never mask file values.
    """
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f'Cannot read run config {path}: {exc}') from exc
        if not isinstance(data, dict):
            raise ConfigError(f'Run config {path} must hold a JSON object')
    data = _merge(data, overrides or {})
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError('Invalid run configuration', errors=serializer.errors)
    try:
        config = build_run_config(serializer.validated_data)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    logger.debug(f'Loaded run config {config.config_hash[:12]}')
    return config
