import math

from django.test import SimpleTestCase

from core.choices import IoUKind, ScoreMethod
from core.confidence import (
    Detection,
    IoUnCConfig,
    conditional_confidence,
    delta_d,
    fuse_scores,
    iounc,
    nms3d,
    score_detection,
    vanilla_unc,
)
from core.distributions import LaplaceDist, interval_prob
from core.exceptions import DomainError
from core.geometry3d import box_iou, shift_depth

from .factories import Box3DFactory, DetectionFactory


class DeltaDTestCase(SimpleTestCase):

    def test_closed_form_for_axis_aligned_box(self):
        for kind in (IoUKind.IOU_3D, IoUKind.BEV):
            for extent in (2.0, 4.0, 8.0, 16.0):
                for th in (0.5, 0.7, 0.9):
                    box = Box3DFactory(w=extent, l=4.5, yaw=0.0)
                    expected = extent * (1 - th) / (1 + th)
                    shift = delta_d(box, IoUnCConfig(th=th, iou_kind=kind))
                    self.assertAlmostEqual(shift, expected, delta=1e-3)

    def test_shift_keeps_iou_above_threshold(self):
        config = IoUnCConfig(th=0.7)
        box = Box3DFactory(yaw=0.6)
        shift = delta_d(box, config)
        self.assertGreaterEqual(box_iou(shift_depth(box, shift), box), 0.7)
        self.assertLess(box_iou(shift_depth(box, shift + 2 * config.tolerance), box), 0.7)

    def test_larger_threshold_gives_smaller_shift(self):
        box = Box3DFactory(yaw=1.1)
        shifts = [delta_d(box, IoUnCConfig(th=th)) for th in (0.5, 0.7, 0.9)]
        self.assertEqual(shifts, sorted(shifts, reverse=True))

    def test_invalid_threshold(self):
        for th in (0.0, 1.0, -0.2):
            with self.assertRaises(DomainError):
                IoUnCConfig(th=th)


class IoUnCTestCase(SimpleTestCase):

    def test_matches_laplace_interval_mass(self):
        for sigma in (0.2, 1.0, 3.5):
            for delta in (0.0, 0.1, 0.9, 4.0):
                dist = LaplaceDist(25.0, sigma)
                self.assertAlmostEqual(iounc(sigma, delta), interval_prob(dist, 25.0 - delta, 25.0 + delta), delta=1e-12)

    def test_range_and_monotonicity(self):
        self.assertEqual(iounc(1.0, 0.0), 0.0)
        values = [iounc(sigma, 0.5) for sigma in (0.1, 0.5, 1.0, 5.0)]
        self.assertEqual(values, sorted(values, reverse=True))
        self.assertTrue(all(0.0 <= value < 1.0 for value in values))

    def test_rejects_degenerate_inputs(self):
        with self.assertRaises(DomainError):
            iounc(0.0, 0.5)
        with self.assertRaises(DomainError):
            iounc(1.0, -0.1)

    def test_worked_example(self):
        self.assertAlmostEqual(iounc(1.0, 0.70588), 0.6315, places=4)

    def test_vanilla(self):
        self.assertEqual(vanilla_unc(0.0), 1.0)
        self.assertAlmostEqual(vanilla_unc(2.0), math.exp(-2.0))


class FusionTestCase(SimpleTestCase):

    def test_fuse_scores(self):
        self.assertAlmostEqual(fuse_scores(0.9, 0.5), 0.45)
        with self.assertRaises(DomainError):
            fuse_scores(1.2, 0.5)

    def test_inconsistent_detection_rejected(self):
        with self.assertRaises(DomainError):
            Detection(box=Box3DFactory(), class_id='Car', p_2d=0.9, p_3d_given_2d=0.5, p_3d=0.5)

    def test_rescored_refuses(self):
        det = DetectionFactory(p_2d=0.8).rescored(0.25)
        self.assertAlmostEqual(det.p_3d, 0.2)

    def test_conditional_confidence_per_method(self):
        self.assertAlmostEqual(conditional_confidence(ScoreMethod.IOUNC, 1.0, 0.5), iounc(1.0, 0.5))
        self.assertAlmostEqual(conditional_confidence(ScoreMethod.VANILLA, 1.0), math.exp(-1.0))
        self.assertEqual(conditional_confidence(ScoreMethod.CONSTANT, None), 1.0)
        with self.assertRaises(DomainError):
            conditional_confidence(ScoreMethod.IOUNC, 1.0)

    def test_score_detection(self):
        box = Box3DFactory()
        det = score_detection(box, 'Car', 0.9, 0.8)
        self.assertAlmostEqual(det.p_3d, 0.9 * iounc(0.8, det.extras['delta_d']))
        self.assertEqual(score_detection(box, 'Car', 0.9, None, ScoreMethod.CONSTANT).p_3d, 0.9)
        with self.assertRaises(DomainError):
            score_detection(box, 'Car', 0.9, None, ScoreMethod.VANILLA)


class NMSTestCase(SimpleTestCase):

    def test_suppresses_overlapping_same_class(self):
        strong = DetectionFactory(p_2d=0.9)
        weak = DetectionFactory(p_2d=0.6, box=Box3DFactory(x=0.3))
        self.assertEqual(nms3d([weak, strong], 0.25), [strong])

    def test_keeps_other_classes_and_distant_boxes(self):
        car = DetectionFactory(p_2d=0.9)
        pedestrian = DetectionFactory(class_id='Pedestrian', p_2d=0.5, box=Box3DFactory(h=1.7, w=0.6, l=0.8))
        far = DetectionFactory(p_2d=0.4, box=Box3DFactory(x=8.0))
        self.assertEqual(nms3d([far, pedestrian, car], 0.25), [car, pedestrian, far])

    def test_ties_follow_input_order(self):
        first = DetectionFactory(p_2d=0.7)
        second = DetectionFactory(p_2d=0.7, box=Box3DFactory(x=0.2))
        self.assertIs(nms3d([first, second], 0.25)[0], first)
        self.assertIs(nms3d([second, first], 0.25)[0], second)

    def test_chained_suppression_keeps_the_far_end(self):
        first = DetectionFactory(p_2d=0.9, box=Box3DFactory(w=2.0, l=2.0))
        middle = DetectionFactory(p_2d=0.8, box=Box3DFactory(x=1.0, w=2.0, l=2.0))
        last = DetectionFactory(p_2d=0.7, box=Box3DFactory(x=2.0, w=2.0, l=2.0))
        self.assertGreater(box_iou(first.box, middle.box, IoUKind.BEV), 0.25)
        self.assertGreater(box_iou(middle.box, last.box, IoUKind.BEV), 0.25)
        self.assertLess(box_iou(first.box, last.box, IoUKind.BEV), 0.25)
        self.assertEqual(nms3d([last, middle, first], 0.25), [first, last])

    def test_empty(self):
        self.assertEqual(nms3d([], 0.5), [])
