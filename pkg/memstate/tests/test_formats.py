import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from memstate import formats
from memstate.exceptions import FormatError, InvalidParameters
from memstate.fit_engine import GridSearchConfig
from memstate.model_core import REFERENCE_PARAMS, ModelKind
from memstate.signal_prep import Trace
from memstate.state_estimator import NoiseModel
from memstate.synth_bench import SynthConfig, simulate_capture


class FormatsTest(SimpleTestCase):
    """
    Test suite for the capture, trace and JSON document formats.

    Attributes:
        tmp: Path of a temporary directory removed after each test.
        capture: Noisy synthetic capture.
    """
    def setUp(self):
        self._dir = tempfile.TemporaryDirectory()
        self.tmp = Path(self._dir.name)
        cfg = SynthConfig(params=REFERENCE_PARAMS[ModelKind.PROPOSED], state_schedule=[(0, 5e-6)],
                          noise=NoiseModel(1e-3, 1e5), seed=1)
        self.capture = simulate_capture(cfg, cfg.read_spec(0), 0)

    def tearDown(self):
        self._dir.cleanup()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text)
        return path

    def test_capture_round_trip_is_bit_exact(self):
        first = self.tmp / 'a.csv'
        second = self.tmp / 'b.csv'
        formats.write_capture(self.capture, first)
        loaded = formats.read_capture(first)
        np.testing.assert_array_equal(loaded.v_total, self.capture.v_total)
        np.testing.assert_array_equal(loaded.v_series, self.capture.v_series)
        np.testing.assert_array_equal(loaded.t, self.capture.t)
        formats.write_capture(loaded, second)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertEqual(formats.sidecar_path(first).read_bytes(), formats.sidecar_path(second).read_bytes())
        self.assertEqual(formats.csv_kind(first), 'capture')

    def test_trace_round_trip(self):
        path = self.tmp / 'trace.csv'
        tr = Trace([0.0, 0.1, -0.1], [0.0, 1e-6, -2e-6], 3, {'r_series': 1e5, 'n_discard': 4})
        formats.write_trace(tr, path)
        self.assertEqual(path.read_text().splitlines()[0], 'v_mem,i_mem')
        loaded = formats.read_trace(path)
        np.testing.assert_array_equal(loaded.i, tr.i)
        self.assertEqual(loaded.meta, {'r_series': 1e5, 'n_discard': 4})
        self.assertEqual(formats.csv_kind(path), 'trace')

    def test_sidecar_versions(self):
        csv = 't,v_total,v_series\n' + '\n'.join(f'{k * 1e-3},{k},0.5' for k in range(8)) + '\n'
        path = self.write('c.csv', csv)
        sidecar = {'r_series_ohms': 1e5, 'n_period': 8, 'sample_rate_hz': 1e3}
        self.write('c.json', json.dumps(sidecar))
        self.assertEqual(formats.read_capture(path).r_series, 1e5)

        self.write('c.json', json.dumps({'schema_version': 2, **sidecar}))
        with self.assertRaises(FormatError):
            formats.read_capture(path)

        self.write('c.json', json.dumps({'schema_version': 1, 'colour': 'red', **sidecar}))
        with self.assertRaises(FormatError) as ctx:
            formats.read_capture(path)
        self.assertIn('colour', ctx.exception.details['errors'])

    def test_missing_value_names_the_row(self):
        path = self.write('trace.csv', 'v_mem,i_mem\n0.1,1e-6\n0.2,\n')
        self.write('trace.json', json.dumps({'n_period': 2}))
        with self.assertRaises(FormatError) as ctx:
            formats.read_trace(path)
        self.assertIn('row 3', ctx.exception.message)

    def test_wrong_header(self):
        path = self.write('x.csv', 'volts,amps\n0.1,1e-6\n')
        with self.assertRaises(FormatError):
            formats.csv_kind(path)
        self.write('x.json', json.dumps({'n_period': 1}))
        with self.assertRaises(FormatError):
            formats.read_trace(path)

    def test_invalid_json(self):
        path = self.write('m.json', '{"traces": [')
        with self.assertRaises(FormatError):
            formats.read_manifest(path)

    def test_manifest(self):
        formats.write_capture(self.capture, self.tmp / 'capture_000.csv')
        path = self.write('manifest.json', json.dumps({
            'traces': ['capture_000.csv'],
            'kind': 'proposed',
            'grid': {'n_points': 3, 'lower': 1e-3},
            'noise': {'sigma_n': 1e-3},
        }))
        manifest = formats.read_manifest(path)
        self.assertEqual(manifest['kind'], ModelKind.PROPOSED)
        self.assertEqual(manifest['grid'], GridSearchConfig(n_points=3, lower=1e-3))
        self.assertEqual(manifest['noise'], NoiseModel(1e-3))
        self.assertEqual(manifest['traces'], [self.tmp / 'capture_000.csv'])

        self.write('manifest.json', json.dumps({'traces': ['capture_000.csv'], 'kind': 'proposed', 'extra': 1}))
        with self.assertRaises(FormatError):
            formats.read_manifest(path)
        self.write('manifest.json', json.dumps({'traces': ['missing.csv'], 'kind': 'proposed'}))
        with self.assertRaises(FormatError) as ctx:
            formats.read_manifest(path)
        self.assertEqual(ctx.exception.details['missing'], [str(self.tmp / 'missing.csv')])

    def test_synth_config(self):
        cfg = formats.synth_config_from_data({
            'kind': 'proposed',
            'preset': 'proposed',
            'state_schedule': [[0, 5e-6], [1, 1e-5]],
            'read': {'amplitudes': [0.2], 'n_cycles': 2},
        })
        self.assertEqual(cfg.params, REFERENCE_PARAMS[ModelKind.PROPOSED])
        self.assertEqual(cfg.state_schedule, ((0, 5e-6), (1, 1e-5)))
        self.assertEqual(cfg.read_amplitudes, (0.2,))
        self.assertEqual(cfg.n_cycles, 2)

        params = REFERENCE_PARAMS[ModelKind.PROPOSED].as_dict()
        with self.assertRaises(FormatError):
            formats.synth_config_from_data({
                'kind': 'proposed', 'preset': 'proposed', 'params': params, 'state_schedule': [[0, 1e-6]]})
        with self.assertRaises(FormatError):
            formats.synth_config_from_data({'kind': 'proposed', 'params': params, 'state_schedule': [[0.5, 1e-6]]})

    def test_fit_result(self):
        document = {
            'kind': 'gmss',
            'params': REFERENCE_PARAMS[ModelKind.GMSS].as_dict(),
            'states': [1.0],
            'loss_history': [0.1],
            'metrics': {'mse': 0.1, 'mae': 0.1, 'mre': 0.1, 'mrse': 0.1},
            'loss': 0.1,
        }
        path = self.tmp / 'fit.json'
        formats.write_json(document, path)
        self.assertTrue(path.read_text().startswith('{\n  "schema_version": 1,'))
        with self.assertRaises(InvalidParameters):
            formats.read_fit_result(path)

        formats.write_json({**document, 'kind': 'modified_gmss'}, path)
        fit = formats.read_fit_result(path)
        self.assertEqual(fit['kind'], ModelKind.MODIFIED_GMSS)
        self.assertEqual(fit['params'], REFERENCE_PARAMS[ModelKind.GMSS])
