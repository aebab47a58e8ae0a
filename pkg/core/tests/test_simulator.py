import math

import numpy as np
import pytest
from django.test import SimpleTestCase

from core.choices import DistributionFamily, ScoreMethod
from core.confidence import delta_d, iounc, vanilla_unc
from core.distributions import ResidualHistogram, fit_error
from core.evaluation import calibration_report, evaluate_frames
from core.exceptions import DomainError, SceneGenerationError
from core.geometry3d import Box3D, intersection_area, iou3d
from core.propagation import DepthBelief, propagate
from core.simulator import (
    KITTI_CAMERA,
    MULTI_CLASS_PRIORS,
    NoiseModel,
    ObjectDiagnostics,
    SceneConfig,
    amplification_study,
    evaluation_frames,
    gen_scene,
    run_pipeline,
    scene_rng,
    simulate_estimates,
    simulate_run,
    standardized_residuals,
)

H3D_ONLY = NoiseModel(h2d_sigma=0.0, bias_sigma=0.0)


def diagnostic_rows(noise_model, n, seed, box_template=None):
    """Diagnostics for one box shape at uniform depths, without scene placement"""
    rng = np.random.default_rng(seed)
    template = box_template or Box3D(x=0.0, y=1.65, z=20.0, h=1.5, w=1.6, l=4.0, yaw=0.3)
    shift = delta_d(template)
    rows = []
    for index in range(n):
        z = float(rng.uniform(5.0, 60.0))
        gt = Box3D(x=template.x, y=template.y, z=z, h=template.h, w=template.w, l=template.l, yaw=template.yaw)
        estimates = simulate_estimates(gt, KITTI_CAMERA, noise_model, rng)
        mu_p, sigma_p = propagate(estimates.beliefs, KITTI_CAMERA.f)
        depth = DepthBelief.compose(mu_p, sigma_p, estimates.mu_b, estimates.sigma_b)
        rows.append(ObjectDiagnostics(
            scene=0, index=index, class_id='Car', z_gt=z, mu_d=depth.mu_d, sigma_d=depth.sigma_d,
            sigma_p=sigma_p, delta_d=shift, p_2d=estimates.p_2d, localized=estimates.localized,
            iounc=iounc(depth.sigma_d, shift), vanilla=vanilla_unc(depth.sigma_d),
            h2d_gt=estimates.h2d_true, mu_h2d=estimates.beliefs.h2d.mu, sigma_h2d=estimates.beliefs.h2d.sigma,
            h3d_gt=gt.h, mu_h3d=estimates.beliefs.h3d.mu, sigma_h3d=estimates.beliefs.h3d.sigma,
        ))
    return rows


class GenSceneTestCase(SimpleTestCase):

    def test_single_object(self):
        scene = gen_scene(SceneConfig(min_objects=1, max_objects=1), np.random.default_rng(0))
        self.assertEqual(len(scene.objects), 1)

    def test_count_within_range(self):
        config = SceneConfig(min_objects=2, max_objects=5)
        for seed in range(20):
            scene = gen_scene(config, scene_rng(seed, 0))
            self.assertTrue(2 <= len(scene.objects) <= 5)

    def test_deterministic_under_seed(self):
        config = SceneConfig(priors=dict(MULTI_CLASS_PRIORS))
        self.assertEqual(gen_scene(config, scene_rng(4, 2), 2), gen_scene(config, scene_rng(4, 2), 2))
        self.assertNotEqual(gen_scene(config, scene_rng(4, 2), 2), gen_scene(config, scene_rng(4, 3), 2))

    @pytest.mark.slow
    def test_footprints_never_overlap(self):
        config = SceneConfig()
        for index in range(1000):
            scene = gen_scene(config, scene_rng(7, index), index)
            boxes = [obj.box for obj in scene.objects]
            for i, a in enumerate(boxes):
                for b in boxes[i + 1:]:
                    self.assertEqual(intersection_area(a.footprint(), b.footprint()), 0.0)

    def test_exhausted_budget_reports_progress(self):
        config = SceneConfig(min_objects=3, max_objects=3, depth_range=(10.0, 10.0), image_width=1,
                             attempts_per_object=5)
        with self.assertRaises(SceneGenerationError) as ctx:
            gen_scene(config, np.random.default_rng(0))
        self.assertEqual(ctx.exception.achieved_count, 1)
        self.assertEqual(ctx.exception.requested_count, 3)

    def test_invalid_config(self):
        with self.assertRaises(DomainError):
            SceneConfig(depth_range=(0.0, 10.0))
        with self.assertRaises(DomainError):
            SceneConfig(min_objects=4, max_objects=2)


class NoiseModelTestCase(SimpleTestCase):

    def test_class_presets(self):
        self.assertEqual(NoiseModel.for_class('Pedestrian').h2d_sigma, 7.951)
        self.assertEqual(NoiseModel.for_class('Unknown').h3d_sigma, 0.083)
        self.assertEqual(NoiseModel.for_class('Car', h3d_sigma=0.2).h3d_sigma, 0.2)

    def test_rejects_negative_sigma(self):
        with self.assertRaises(DomainError):
            NoiseModel(h3d_sigma=-0.1)


class SimulateEstimatesTestCase(SimpleTestCase):

    def test_zero_noise_reports_truth(self):
        gt = Box3D(x=1.0, y=1.65, z=25.0, h=1.5, w=1.6, l=4.0, yaw=0.0)
        estimates = simulate_estimates(gt, KITTI_CAMERA, NoiseModel.zero(), np.random.default_rng(0))
        self.assertAlmostEqual(estimates.beliefs.h2d.mu, KITTI_CAMERA.f * 1.5 / 25.0)
        self.assertEqual(estimates.beliefs.h3d.mu, 1.5)
        self.assertEqual(estimates.beliefs.h3d.sigma, NoiseModel.zero().sigma_floor)
        self.assertEqual(estimates.mu_b, 0.0)
        self.assertTrue(estimates.localized)

    def test_mean_absolute_height_error(self):
        rng = np.random.default_rng(5)
        gt = Box3D(x=0.0, y=1.65, z=20.0, h=1.5, w=1.6, l=4.0, yaw=0.0)
        errors = [abs(simulate_estimates(gt, KITTI_CAMERA, NoiseModel(), rng).beliefs.h3d.mu - 1.5)
                  for _ in range(20_000)]
        self.assertAlmostEqual(np.mean(errors), 0.083 / math.sqrt(2.0), delta=0.002)

    def test_heteroscedastic_widens_far_objects(self):
        noise = NoiseModel(heteroscedastic=True)
        rng = np.random.default_rng(0)
        near = simulate_estimates(Box3D(0.0, 1.65, 10.0, 1.5, 1.6, 4.0, 0.0), KITTI_CAMERA, noise, rng)
        far = simulate_estimates(Box3D(0.0, 1.65, 40.0, 1.5, 1.6, 4.0, 0.0), KITTI_CAMERA, noise, rng)
        self.assertAlmostEqual(far.beliefs.h2d.sigma, 4 * near.beliefs.h2d.sigma)

    def test_behind_camera_rejected(self):
        with self.assertRaises(DomainError):
            simulate_estimates(Box3D(0.0, 1.65, -5.0, 1.5, 1.6, 4.0, 0.0), KITTI_CAMERA, NoiseModel(),
                               np.random.default_rng(0))


class RunPipelineTestCase(SimpleTestCase):

    def test_zero_noise_recovers_ground_truth(self):
        scene = gen_scene(SceneConfig(), scene_rng(1, 0))
        result = run_pipeline(scene, NoiseModel.zero(), rng=np.random.default_rng(1))
        for obj in result.objects:
            self.assertAlmostEqual(iou3d(obj.detection.box, obj.gt.box), 1.0, places=6)
            self.assertAlmostEqual(obj.detection.p_3d_given_2d, 1.0, places=9)

    def test_failed_2d_stage_cannot_match(self):
        noise = NoiseModel(p2d_offset=-20.0, p2d_noise=0.0)
        results = simulate_run(0, 10, noise_model=noise)
        failed = [obj for result in results for obj, diag in zip(result.objects, result.diagnostics)
                  if not diag.localized]
        self.assertTrue(failed)
        for obj in failed:
            self.assertEqual(iou3d(obj.detection.box, obj.gt.box), 0.0)

    def test_detection_depth_is_belief_mean(self):
        result = simulate_run(2, 1)[0]
        for obj in result.objects:
            self.assertAlmostEqual(obj.detection.box.z, obj.depth.mu_d)
            self.assertAlmostEqual(obj.detection.box.h, obj.beliefs.h3d.mu)

    def test_deterministic_under_seed(self):
        self.assertEqual(simulate_run(3, 3), simulate_run(3, 3))

    def test_rescoring_methods(self):
        result = simulate_run(4, 1)[0]
        constant = result.detections_for(ScoreMethod.CONSTANT)
        self.assertEqual([det.p_3d for det in constant], [det.p_2d for det in constant])
        vanilla = result.detections_for(ScoreMethod.VANILLA)
        for det, diag in zip(vanilla, result.diagnostics):
            self.assertAlmostEqual(det.p_3d_given_2d, diag.vanilla)


class CalibrationTestCase(SimpleTestCase):

    def test_coverage_matches_nominal(self):
        report = calibration_report(diagnostic_rows(H3D_ONLY, 20_000, seed=0))
        self.assertAlmostEqual(report.coverage_at(1.0 - math.exp(-1.0)), 1.0 - math.exp(-1.0), delta=0.02)
        for row in report.rows:
            self.assertAlmostEqual(row.empirical, row.nominal, delta=0.02)

    def test_iounc_matches_empirical_hit_rate(self):
        report = calibration_report(diagnostic_rows(H3D_ONLY, 20_000, seed=1))
        self.assertAlmostEqual(report.iounc_coverage, report.mean_iounc, delta=0.02)

    @pytest.mark.slow
    def test_pipeline_coverage_with_calibrated_streams(self):
        nominal = 1.0 - math.exp(-1.0)
        bias_only = NoiseModel(h2d_sigma=0.0, h3d_sigma=0.0, bias_sigma=1.0)
        for seed, noise in enumerate((H3D_ONLY, bias_only)):
            diagnostics = [diag for result in simulate_run(seed, 1000, noise_model=noise) for diag in result.diagnostics]
            report = calibration_report(diagnostics)
            self.assertGreater(report.count, 4000)
            self.assertAlmostEqual(report.coverage_at(nominal), nominal, delta=0.02)

    def test_inflated_report_scale_over_covers(self):
        nominal = 1.0 - math.exp(-1.0)
        coverage = {}
        for scale in (1.0, 2.0):
            noise = NoiseModel(h2d_sigma=0.0, bias_sigma=0.0, report_scale=scale)
            diagnostics = [diag for result in simulate_run(5, 300, noise_model=noise) for diag in result.diagnostics]
            coverage[scale] = calibration_report(diagnostics).coverage_at(nominal)
        self.assertAlmostEqual(coverage[1.0], nominal, delta=0.04)
        self.assertGreater(coverage[2.0], coverage[1.0] + 0.15)

    def test_sigma_ranks_errors(self):
        report = calibration_report(diagnostic_rows(NoiseModel(), 10_000, seed=2))
        self.assertGreater(report.spearman_rho, 0.3)

    def test_standardized_depth_residuals_are_laplace(self):
        residuals = standardized_residuals(diagnostic_rows(H3D_ONLY, 20_000, seed=3))
        self.assertEqual(set(residuals), {'depth', 'h2d', 'h3d'})
        histogram = ResidualHistogram.from_values(residuals['depth'])
        self.assertLess(
            fit_error(histogram, DistributionFamily.LAPLACE), fit_error(histogram, DistributionFamily.GAUSS),
        )


class AmplificationTestCase(SimpleTestCase):

    def test_sixty_meters(self):
        row = amplification_study([60.0], h3d=1.5, jitter=0.1, f=KITTI_CAMERA.f)[0]
        self.assertAlmostEqual(row.shift_plus, 4.0, delta=1e-9)
        self.assertAlmostEqual(row.shift_minus, -4.0, delta=1e-9)
        self.assertAlmostEqual(row.shift_minus_inverse, -3.75, delta=1e-9)

    def test_linear_in_depth_and_zero_without_jitter(self):
        rows = amplification_study([10.0, 20.0, 40.0], h3d=1.5, jitter=0.1, f=700.0)
        for row in rows:
            self.assertAlmostEqual(row.shift_plus, row.depth * 0.1 / 1.5, delta=1e-9)
        for row in amplification_study([10.0, 50.0], h3d=1.5, jitter=0.0, f=700.0):
            self.assertAlmostEqual(row.shift_plus, 0.0, delta=1e-12)

    def test_invalid_inputs(self):
        with self.assertRaises(DomainError):
            amplification_study([0.0], 1.5, 0.1, 700.0)
        with self.assertRaises(DomainError):
            amplification_study([10.0], 1.5, -0.1, 700.0)


class ScoreQualityTestCase(SimpleTestCase):

    @pytest.mark.slow
    def test_iounc_beats_vanilla_beats_constant(self):
        noise = NoiseModel(heteroscedastic=True)
        ap40 = {method: [] for method in ScoreMethod}
        for seed in range(20):
            results = simulate_run(seed, 20, noise_model=noise)
            for method in ScoreMethod:
                ap40[method].append(evaluate_frames(evaluation_frames(results, method), 'Car').ap40)
        mean = {method: np.mean(values) for method, values in ap40.items()}
        self.assertGreater(mean[ScoreMethod.IOUNC], mean[ScoreMethod.VANILLA])
        self.assertGreater(mean[ScoreMethod.VANILLA], mean[ScoreMethod.CONSTANT])
