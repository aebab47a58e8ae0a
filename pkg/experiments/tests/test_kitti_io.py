import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from core.choices import Difficulty
from core.exceptions import DomainError
from core.geometry3d import Box3D, CameraIntrinsics
from experiments.exceptions import CalibrationFileError, KittiParseError
from experiments.kitti_io import (
    calib_text,
    image_bbox,
    parse_calib_text,
    parse_kitti_calib,
    parse_kitti_label,
    read_label_file,
    record_from_box,
    serialize_kitti_label,
    write_kitti_calib,
    write_label_file,
)

from .factories import KittiLabelRecordFactory

GT_LINE = 'Car 0.00 0 -1.57 599.41 156.40 629.75 189.25 1.50 1.60 4.00 1.00 1.65 20.00 -1.52'
PRED_LINE = GT_LINE + ' 0.8731 1.2500'

CALIB = """P0: 7.070493e+02 0.000000e+00 6.040814e+02 0.000000e+00 0.000000e+00 7.070493e+02 1.805066e+02 0.0 0.0 0.0 1.0 0.0
P2: 7.000000e+02 0.000000e+00 6.200000e+02 4.575831e+01 0.000000e+00 7.000000e+02 1.900000e+02 -3.454157e-01 0.0 0.0 1.0 4.98e-03
R0_rect: 1 0 0 0 1 0 0 0 1
"""


class LabelParsingTestCase(SimpleTestCase):

    def test_ground_truth_line(self):
        record = parse_kitti_label(GT_LINE)
        self.assertEqual(record.type, 'Car')
        self.assertEqual(record.occluded, 0)
        self.assertEqual(record.dimensions, (1.5, 1.6, 4.0))
        self.assertEqual(record.location, (1.0, 1.65, 20.0))
        self.assertIsNone(record.score)
        box = record.to_box()
        self.assertEqual((box.h, box.w, box.l, box.z), (1.5, 1.6, 4.0, 20.0))

    def test_canonical_lines_round_trip(self):
        for line in (GT_LINE, PRED_LINE, GT_LINE + ' 0.5000'):
            self.assertEqual(serialize_kitti_label(parse_kitti_label(line)), line)

    def test_prediction_columns(self):
        record = parse_kitti_label(PRED_LINE)
        self.assertEqual(record.score, 0.8731)
        self.assertEqual(record.sigma_d, 1.25)

    def test_fourteen_fields_names_missing_column(self):
        with self.assertRaises(KittiParseError) as ctx:
            parse_kitti_label(GT_LINE.rsplit(' ', 1)[0], line_number=3)
        self.assertEqual(ctx.exception.column, 15)
        self.assertEqual(ctx.exception.column_name, 'rotation_y')
        self.assertEqual(ctx.exception.details()['line_number'], 3)

    def test_too_many_fields(self):
        with self.assertRaises(KittiParseError):
            parse_kitti_label(PRED_LINE + ' 7.0')

    def test_non_numeric_column(self):
        with self.assertRaises(KittiParseError) as ctx:
            parse_kitti_label(GT_LINE.replace(' 20.00 ', ' far '))
        self.assertEqual(ctx.exception.column_name, 'z')

    def test_fractional_occlusion(self):
        with self.assertRaises(KittiParseError):
            parse_kitti_label(GT_LINE.replace('Car 0.00 0 ', 'Car 0.00 0.5 '))

    def test_dont_care_keeps_placeholder_dimensions(self):
        record = parse_kitti_label('DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10')
        self.assertTrue(record.ignorable)
        with self.assertRaises(KittiParseError):
            parse_kitti_label(GT_LINE.replace(' 1.50 1.60 ', ' -1.00 1.60 '))

    def test_unknown_class_kept_verbatim(self):
        self.assertEqual(parse_kitti_label(GT_LINE.replace('Car', 'Tram')).type, 'Tram')

    def test_sigma_needs_score(self):
        with self.assertRaises(ValueError):
            serialize_kitti_label(KittiLabelRecordFactory(sigma_d=1.0))

    def test_files_skip_blank_lines(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / '000001.txt'
            path.write_text(GT_LINE + '\n\n' + PRED_LINE + '\n', encoding='utf-8')
            records = read_label_file(path)
            self.assertEqual(len(records), 2)
            write_label_file(path, records)
            self.assertEqual(path.read_text(encoding='utf-8'), GT_LINE + '\n' + PRED_LINE + '\n')


class DifficultyTestCase(SimpleTestCase):

    def test_buckets(self):
        self.assertEqual(KittiLabelRecordFactory().difficulty(), Difficulty.EASY)
        moderate = KittiLabelRecordFactory(bbox=(600.0, 170.0, 640.0, 200.0), occluded=1)
        self.assertEqual(moderate.difficulty(), Difficulty.MODERATE)
        hard = KittiLabelRecordFactory(truncated=0.45)
        self.assertEqual(hard.difficulty(), Difficulty.HARD)
        self.assertIsNone(KittiLabelRecordFactory(occluded=3).difficulty())
        self.assertIsNone(KittiLabelRecordFactory(bbox=(600.0, 170.0, 640.0, 190.0)).difficulty())

    def test_buckets_are_cumulative(self):
        easy = KittiLabelRecordFactory()
        hard = KittiLabelRecordFactory(occluded=2)
        self.assertTrue(easy.within(Difficulty.MODERATE))
        self.assertTrue(easy.within(Difficulty.HARD))
        self.assertFalse(hard.within(Difficulty.MODERATE))
        self.assertTrue(KittiLabelRecordFactory(occluded=3).within(Difficulty.ALL))


class CalibrationTestCase(SimpleTestCase):

    def test_reads_p2(self):
        camera = parse_calib_text(CALIB)
        self.assertEqual((camera.f, camera.c_u, camera.c_v), (700.0, 620.0, 190.0))

    def test_malformed_p2(self):
        with self.assertRaises(CalibrationFileError):
            parse_calib_text('P2: 7.0e+02 0.0 6.2e+02\n')
        with self.assertRaises(CalibrationFileError):
            parse_calib_text('P0: 1 0 0 0 0 1 0 0 0 0 1 0\n')
        with self.assertRaises(CalibrationFileError):
            parse_calib_text('P2: a b c d e f g h i j k l\n')

    def test_written_calibration_reads_back(self):
        camera = CameraIntrinsics(f=721.5377, c_u=609.5593, c_v=172.854)
        self.assertEqual(parse_calib_text(calib_text(camera)), camera)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'calib.txt'
            write_kitti_calib(path, camera)
            self.assertEqual(parse_kitti_calib(path), camera)


class RecordFromBoxTestCase(SimpleTestCase):

    def setUp(self):
        self.camera = CameraIntrinsics(f=700.0, c_u=620.0, c_v=190.0)

    def test_projection_and_alpha(self):
        box = Box3D(x=0.0, y=1.65, z=20.0, h=1.5, w=1.6, l=4.0, yaw=0.3)
        record = record_from_box('Car', box, self.camera, score=0.9, sigma_d=1.1)
        self.assertAlmostEqual(record.alpha, 0.3)
        left, top, right, bottom = record.bbox
        self.assertLess(left, 620.0)
        self.assertGreater(right, 620.0)
        self.assertAlmostEqual(bottom - top, 700.0 * 1.5 / 20.0, delta=8.0)
        self.assertEqual(record.to_box(), box)

    def test_box_behind_camera(self):
        with self.assertRaises(DomainError):
            image_bbox(Box3D(x=0.0, y=1.65, z=0.5, h=1.5, w=1.6, l=4.0, yaw=0.0), self.camera)
