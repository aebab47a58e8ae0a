"""
Synthetic scenes and the end-to-end projection pipeline over known ground truth.

A scene is a set of non-overlapping ground-truth boxes seen by a pinhole
camera. ``simulate_estimates`` plays the role of the network heads: it reports
noisy 2D/3D heights with their uncertainties, a bias stream and a 2D score.
``run_pipeline`` turns those into scored detections exactly as inference does.
"""
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .choices import ScoreMethod
from .confidence import Detection, IoUnCConfig, conditional_confidence, delta_d, iounc, vanilla_unc
from .distributions import LaplaceDist
from .exceptions import DomainError, SceneGenerationError
from .geometry3d import Box3D, CameraIntrinsics, decode_center, intersection_area, project_point
from .propagation import DepthBelief, HeightBeliefs, propagate

logger = logging.getLogger(__name__)

# KITTI left colour camera (P2)
KITTI_CAMERA = CameraIntrinsics(f=721.5377, c_u=609.5593, c_v=172.854)


@dataclass(frozen=True)
class ClassPrior:
    h: float
    w: float
    l: float  # noqa: E741
    weight: float = 1.0

    def __post_init__(self):
        if min(self.h, self.w, self.l) <= 0 or self.weight <= 0:
            raise DomainError('Class priors must be positive')


CAR_PRIORS = {'Car': ClassPrior(h=1.5, w=1.6, l=4.0)}

MULTI_CLASS_PRIORS = {
    'Car': ClassPrior(h=1.5, w=1.6, l=4.0, weight=0.7),
    'Pedestrian': ClassPrior(h=1.75, w=0.6, l=0.8, weight=0.2),
    'Cyclist': ClassPrior(h=1.75, w=0.6, l=1.75, weight=0.1),
}

# Mean absolute height errors per class: (2D pixels, 3D meters)
HEIGHT_ERRORS = {
    'Car': (3.118, 0.083),
    'Pedestrian': (7.951, 0.084),
    'Cyclist': (6.806, 0.089),
    'Overall': (3.959, 0.083),
}


@dataclass(frozen=True)
class SceneConfig:
    min_objects: int = 2
    max_objects: int = 8
    depth_range: tuple = (5.0, 60.0)
    priors: dict = field(default_factory=lambda: dict(CAR_PRIORS))
    dim_jitter: float = 0.05
    yaw_range: tuple = (-math.pi, math.pi)
    camera: CameraIntrinsics = KITTI_CAMERA
    image_width: int = 1242
    camera_height: float = 1.65
    attempts_per_object: int = 100

    def __post_init__(self):
        if not 1 <= self.min_objects <= self.max_objects:
            raise DomainError(f'Invalid object count range [{self.min_objects}, {self.max_objects}]')
        lo, hi = self.depth_range
        if not 0 < lo <= hi:
            raise DomainError(f'Depth range must be positive and ordered, got {self.depth_range}')
        if not self.priors:
            raise DomainError('At least one class prior is required')
        if self.dim_jitter < 0:
            raise DomainError('Dimension jitter must be non-negative')


@dataclass(frozen=True)
class NoiseModel:
    h2d_sigma: float = HEIGHT_ERRORS['Overall'][0]
    h3d_sigma: float = HEIGHT_ERRORS['Overall'][1]
    bias_mu: float = 0.0
    bias_sigma: float = 0.5
    p2d_offset: float = 1.5
    p2d_slope: float = 2.0
    p2d_noise: float = 1.0
    heteroscedastic: bool = False
    reference_depth: float = 20.0
    report_scale: float = 1.0
    sigma_floor: float = 1e-4
    # A 2D detection fails with probability 1 - p_2d; failed boxes are
    # displaced sideways by failure_offset times their longest side
    localization_failures: bool = True
    failure_offset: float = 1.5

    def __post_init__(self):
        for name in ('h2d_sigma', 'h3d_sigma', 'bias_sigma', 'p2d_noise'):
            if getattr(self, name) < 0:
                raise DomainError(f'{name} must be non-negative')
        if not (self.report_scale > 0 and self.reference_depth > 0 and self.sigma_floor > 0):
            raise DomainError('report_scale, reference_depth and sigma_floor must be positive')
        if self.failure_offset < 1.5:
            raise DomainError('failure_offset below 1.5 lets a displaced box overlap its ground truth')

    @property
    def calibrated(self):
        return self.report_scale == 1.0

    @classmethod
    def for_class(cls, class_name, **overrides):
        h2d_sigma, h3d_sigma = HEIGHT_ERRORS.get(class_name, HEIGHT_ERRORS['Overall'])
        values = {'h2d_sigma': h2d_sigma, 'h3d_sigma': h3d_sigma}
        values.update(overrides)
        return cls(**values)

    @classmethod
    def zero(cls):
        return cls(h2d_sigma=0.0, h3d_sigma=0.0, bias_sigma=0.0, localization_failures=False)


@dataclass(frozen=True)
class GroundTruthObject:
    index: int
    class_id: str
    box: Box3D

    def to_dict(self):
        return {'index': self.index, 'class_id': self.class_id, 'box': self.box.to_dict()}


@dataclass(frozen=True)
class Scene:
    index: int
    camera: CameraIntrinsics
    objects: tuple

    def to_dict(self):
        return {
            'index': self.index,
            'camera': asdict(self.camera),
            'objects': [obj.to_dict() for obj in self.objects],
        }


def scene_rng(seed, scene_index):
    """Independent generator for one scene of one seeded run"""
    return np.random.default_rng(np.random.SeedSequence([seed, scene_index]))


def gen_scene(config, rng, index=0):
    """
    Place objects by rejection sampling so that BEV footprints never overlap.

    Objects are dropped uniformly across the image width at a uniform depth and
    stand on the ground plane ``camera_height`` below the camera.
    """
    target = int(rng.integers(config.min_objects, config.max_objects + 1))
    classes = sorted(config.priors)
    weights = np.array([config.priors[name].weight for name in classes], dtype=float)
    weights /= weights.sum()
    camera = config.camera
    placed = []
    budget = config.attempts_per_object * target
    attempts = 0
    while len(placed) < target:
        if attempts >= budget:
            raise SceneGenerationError(
                f'Placed {len(placed)} of {target} objects in {budget} attempts',
                achieved_count=len(placed),
                requested_count=target,
            )
        attempts += 1
        class_id = classes[int(rng.choice(len(classes), p=weights))]
        prior = config.priors[class_id]
        jitter = 1.0 + config.dim_jitter * rng.standard_normal(3)
        depth = float(rng.uniform(*config.depth_range))
        u = float(rng.uniform(0.0, config.image_width))
        box = Box3D(
            x=(u - camera.c_u) * depth / camera.f,
            y=config.camera_height,
            z=depth,
            h=prior.h * max(jitter[0], 0.5),
            w=prior.w * max(jitter[1], 0.5),
            l=prior.l * max(jitter[2], 0.5),
            yaw=float(rng.uniform(*config.yaw_range)),
        )
        footprint = box.footprint()
        if any(intersection_area(footprint, other.box.footprint()) > 0 for other in placed):
            continue
        placed.append(GroundTruthObject(index=len(placed), class_id=class_id, box=box))
    logger.debug(f'Scene {index}: placed {len(placed)} objects in {attempts} attempts')
    return Scene(index=index, camera=camera, objects=tuple(placed))


@dataclass(frozen=True)
class SimulatedEstimates:
    beliefs: HeightBeliefs
    mu_b: float
    sigma_b: float
    p_2d: float
    h2d_true: float
    localized: bool = True


def _guarded_laplace(truth, sigma, rng):
    """truth + Laplace noise, redrawn while the draw is not above 10% of truth"""
    noise = LaplaceDist(0.0, sigma)
    value = truth + noise.sample(rng)
    while value <= 0.1 * truth:
        value = truth + noise.sample(rng)
    return value


def simulate_estimates(gt, camera, noise_model, rng):
    """Noisy head outputs for one ground-truth box"""
    if not gt.z > 0:
        raise DomainError(f'Ground-truth depth must be positive, got {gt.z}')
    nm = noise_model
    h2d_true = camera.f * gt.h / gt.z
    scale = gt.z / nm.reference_depth if nm.heteroscedastic else 1.0
    sigma_2d = nm.h2d_sigma * scale
    sigma_3d = nm.h3d_sigma

    mu_2d = _guarded_laplace(h2d_true, sigma_2d, rng)
    mu_3d = _guarded_laplace(gt.h, sigma_3d, rng)
    beliefs = HeightBeliefs.from_values(
        mu_2d,
        max(sigma_2d * nm.report_scale, nm.sigma_floor),
        mu_3d,
        max(sigma_3d * nm.report_scale, nm.sigma_floor),
    )

    mu_b = nm.bias_mu + LaplaceDist(0.0, nm.bias_sigma).sample(rng)
    sigma_b = nm.bias_sigma * nm.report_scale

    logit = nm.p2d_offset + nm.p2d_slope * math.log(h2d_true / 25.0) + nm.p2d_noise * rng.standard_normal()
    p_2d = min(max(1.0 / (1.0 + math.exp(-logit)), 0.01), 0.99)
    localized = not nm.localization_failures or bool(rng.uniform() < p_2d)
    return SimulatedEstimates(
        beliefs=beliefs, mu_b=mu_b, sigma_b=sigma_b, p_2d=p_2d, h2d_true=h2d_true, localized=localized,
    )


@dataclass(frozen=True)
class ObjectDiagnostics:
    scene: int
    index: int
    class_id: str
    z_gt: float
    mu_d: float
    sigma_d: float
    sigma_p: float
    delta_d: float
    p_2d: float
    localized: bool
    iounc: float
    vanilla: float
    h2d_gt: float
    mu_h2d: float
    sigma_h2d: float
    h3d_gt: float
    mu_h3d: float
    sigma_h3d: float

    @property
    def depth_error(self):
        return self.z_gt - self.mu_d

    def to_dict(self):
        row = asdict(self)
        row['depth_error'] = self.depth_error
        return row


@dataclass(frozen=True)
class SimulatedObject:
    gt: GroundTruthObject
    beliefs: HeightBeliefs
    depth: DepthBelief
    detection: Detection


@dataclass(frozen=True)
class PipelineResult:
    scene: Scene
    objects: tuple
    diagnostics: tuple

    def detections_for(self, method):
        """Detections re-scored under another confidence method"""
        method = ScoreMethod(method)
        scored = []
        for obj, diag in zip(self.objects, self.diagnostics):
            p_cond = conditional_confidence(method, diag.sigma_d, diag.delta_d)
            scored.append(obj.detection.rescored(p_cond))
        return scored

    @property
    def detections(self):
        return [obj.detection for obj in self.objects]


def run_pipeline(scene, noise_model, config=None, rng=None, method=ScoreMethod.IOUNC):
    """
    Estimate, propagate and score every object of ``scene``.

    Each detection keeps the ground-truth footprint and yaw, takes its height
    from the 3D height mean and sits at the depth mean along the ray through
    the projected ground-truth center. When the simulated 2D stage failed the
    box is moved sideways towards the optical axis, clear of its ground truth.
    """
    config = config or IoUnCConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    camera = scene.camera
    objects = []
    diagnostics = []
    for gt in scene.objects:
        estimates = simulate_estimates(gt.box, camera, noise_model, rng)
        mu_p, sigma_p = propagate(estimates.beliefs, camera.f)
        depth = DepthBelief.compose(mu_p, sigma_p, estimates.mu_b, estimates.sigma_b)
        u, v = project_point(gt.box.x, gt.box.y, gt.box.z, camera)
        x, y, z = decode_center(u, v, depth.mu_d, camera)
        if not estimates.localized:
            side = 1.0 if x < 0 else -1.0
            x += side * noise_model.failure_offset * max(gt.box.l, gt.box.w)
        box = replace(gt.box, x=x, y=y, z=z, h=estimates.beliefs.h3d.mu)
        shift = delta_d(box, config)
        confidences = {
            ScoreMethod.IOUNC: iounc(depth.sigma_d, shift),
            ScoreMethod.VANILLA: vanilla_unc(depth.sigma_d),
            ScoreMethod.CONSTANT: 1.0,
        }
        detection = Detection.fused(
            box,
            gt.class_id,
            estimates.p_2d,
            confidences[ScoreMethod(method)],
            sigma_d=depth.sigma_d,
            delta_d=shift,
        )
        objects.append(SimulatedObject(gt=gt, beliefs=estimates.beliefs, depth=depth, detection=detection))
        diagnostics.append(ObjectDiagnostics(
            scene=scene.index,
            index=gt.index,
            class_id=gt.class_id,
            z_gt=gt.box.z,
            mu_d=depth.mu_d,
            sigma_d=depth.sigma_d,
            sigma_p=depth.sigma_p,
            delta_d=shift,
            p_2d=estimates.p_2d,
            localized=estimates.localized,
            iounc=confidences[ScoreMethod.IOUNC],
            vanilla=confidences[ScoreMethod.VANILLA],
            h2d_gt=estimates.h2d_true,
            mu_h2d=estimates.beliefs.h2d.mu,
            sigma_h2d=estimates.beliefs.h2d.sigma,
            h3d_gt=gt.box.h,
            mu_h3d=estimates.beliefs.h3d.mu,
            sigma_h3d=estimates.beliefs.h3d.sigma,
        ))
    return PipelineResult(scene=scene, objects=tuple(objects), diagnostics=tuple(diagnostics))


def simulate_run(seed, scenes, scene_config=None, noise_model=None, iounc_config=None):
    """Generate and process ``scenes`` scenes, each on its own (seed, index) substream"""
    scene_config = scene_config or SceneConfig()
    noise_model = noise_model or NoiseModel()
    results = []
    for index in range(scenes):
        rng = scene_rng(seed, index)
        scene = gen_scene(scene_config, rng, index=index)
        results.append(run_pipeline(scene, noise_model, iounc_config, rng))
    logger.info(f'Seed {seed}: simulated {sum(len(r.objects) for r in results)} objects in {scenes} scenes')
    return results


def standardized_residuals(diagnostics):
    """(truth - mean) / sigma for depth, 2D height and 3D height"""
    rows = list(diagnostics)
    if not rows:
        raise DomainError('No diagnostics to standardize')

    def column(name):
        return np.array([getattr(row, name) for row in rows], dtype=float)

    return {
        'depth': (column('z_gt') - column('mu_d')) / column('sigma_d'),
        'h2d': (column('h2d_gt') - column('mu_h2d')) / column('sigma_h2d'),
        'h3d': (column('h3d_gt') - column('mu_h3d')) / column('sigma_h3d'),
    }


@dataclass(frozen=True)
class AmplificationRow:
    depth: float
    h2d: float
    shift_plus: float
    shift_minus: float
    shift_minus_inverse: float


def amplification_study(depths, h3d, jitter, f):
    """
    Depth shift caused by a 3D height error at each depth.

    shift_plus / shift_minus: the estimate is h3d + jitter / h3d - jitter while
    the 2D height matches an object of height h3d. shift_minus_inverse: the
    object is jitter taller than the h3d estimate.
    """
    if not (h3d > 0 and f > 0 and jitter >= 0):
        raise DomainError('amplification_study needs positive h3d and f and non-negative jitter')
    rows = []
    for depth in depths:
        if not depth > 0:
            raise DomainError(f'Depths must be positive, got {depth}')
        h2d = f * h3d / depth
        taller_h2d = f * (h3d + jitter) / depth
        rows.append(AmplificationRow(
            depth=depth,
            h2d=h2d,
            shift_plus=f * (h3d + jitter) / h2d - depth,
            shift_minus=f * (h3d - jitter) / h2d - depth,
            shift_minus_inverse=f * h3d / taller_h2d - depth,
        ))
    return rows


def evaluation_frames(results, method):
    """(detections, ground truth) pairs for ``evaluation.evaluate_frames``"""
    return [
        (result.detections_for(method), [(obj.class_id, obj.box) for obj in result.scene.objects])
        for result in results
    ]
