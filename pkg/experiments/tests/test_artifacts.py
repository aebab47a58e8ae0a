import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, TestCase

from experiments.artifacts import ArtifactWriter, dumps, round_floats
from experiments.exceptions import SchemaError
from experiments.models import ExperimentRun
from experiments.serializers import DetectionsDocumentSerializer, validate_document

from .factories import ExperimentRunFactory


class RoundFloatsTestCase(SimpleTestCase):

    def test_significant_digits(self):
        self.assertEqual(round_floats(1.0 / 3.0), 0.3333333333)
        self.assertEqual(round_floats({'a': [np.float64(2.0 / 3.0), 3]}), {'a': [0.6666666667, 3]})

    def test_numpy_values(self):
        self.assertEqual(round_floats(np.array([1, 2])), [1, 2])
        self.assertIs(round_floats(np.bool_(True)), True)
        self.assertIsInstance(round_floats(np.int64(4)), int)

    def test_non_finite_rejected(self):
        with self.assertRaises(ValueError):
            dumps({'value': float('nan')})


class ArtifactWriterTestCase(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.writer = ArtifactWriter(Path(tmp.name) / 'out')

    def test_versioned_json_and_manifest(self):
        path = self.writer.json('result.json', {'kind': 'test', 'value': 0.1 + 0.2})
        data = json.loads(path.read_text(encoding='utf-8'))
        self.assertEqual(data, {'kind': 'test', 'schema_version': 1, 'value': 0.3})
        self.writer.csv('rows.csv', ('a', 'b'), [[1, 0.5]])
        self.writer.text('nested/file.txt', 'x\n')
        manifest = json.loads(self.writer.manifest('test', {'seed': 1}, seed=1).read_text(encoding='utf-8'))
        self.assertEqual(sorted(manifest['files']), ['nested/file.txt', 'result.json', 'rows.csv'])
        self.assertIn('numpy', manifest['versions'])

    def test_csv_cells(self):
        path = self.writer.csv('rows.csv', ('a', 'b', 'c'), [[1, 2.0 / 3.0, None]])
        self.assertEqual(path.read_text(encoding='utf-8'), 'a,b,c\n1,0.6666666667,\n')


class DocumentSchemaTestCase(SimpleTestCase):

    def document(self, **overrides):
        return {
            'schema_version': 1,
            'kind': 'detections',
            'method': 'iounc',
            'detections': [{
                'class_id': 'Car',
                'box': {'x': 0.0, 'y': 1.65, 'z': 20.0, 'h': 1.5, 'w': 1.6, 'l': 4.0, 'yaw': 0.0},
                'p_2d': 0.9, 'p_3d_given_2d': 0.5, 'p_3d': 0.45, 'sigma_d': 1.0,
            }],
            **overrides,
        }

    def test_valid(self):
        data = validate_document(self.document(), DetectionsDocumentSerializer)
        self.assertIsNone(data['detections'][0]['gt_index'])

    def test_rejections(self):
        for overrides in ({'schema_version': 2}, {'kind': 'simulation'}):
            with self.assertRaises(SchemaError):
                validate_document(self.document(**overrides), DetectionsDocumentSerializer)
        document = self.document()
        document['detections'][0]['p_3d'] = 1.2
        with self.assertRaises(SchemaError) as ctx:
            validate_document(document, DetectionsDocumentSerializer)
        self.assertIn('detections', ctx.exception.details()['errors'])


class ExperimentRunTestCase(TestCase):

    def test_latest_succeeded(self):
        older = ExperimentRunFactory()
        newer = ExperimentRunFactory()
        ExperimentRunFactory(status='failed')
        ExperimentRunFactory(command='score')
        self.assertEqual(ExperimentRun.latest_succeeded('simulate'), newer)
        self.assertNotEqual(newer, older)
        self.assertIsNone(ExperimentRun.latest_succeeded('evaluate'))

    def test_str(self):
        run = ExperimentRunFactory(command='amplify')
        self.assertEqual(str(run), f'amplify #{run.pk} (succeeded)')
