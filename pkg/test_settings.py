"""
Test Suite for Experiment Settings
Tests YAML loading, schema validation with key locations, flag overrides and
resolution of the configured systems
"""

import os
import math
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

from models import to_internal
from spectral import SearchWindow, dark_state_config
from dfi import DFI_GAMMA0, DFI_PHI0
from settings import (
    Axis, ExperimentConfigError, OUTPUT_DIR_ENV, load_config, parse_override, resolve_output_dir
)


class SettingsTestCase(unittest.TestCase):
    """Base test case with a scratch directory for experiment files"""

    def setUp(self):
        """Set up a temporary directory"""
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text: str, name: str = 'experiment.yaml') -> str:
        path = self.root / name
        path.write_text(text)
        return str(path)


class TestDefaults(SettingsTestCase):

    def test_kind_only(self):
        """Test every section falls back to its defaults"""
        config = load_config(kind='emit')
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.samples, 100)
        self.assertEqual(config.threads, 1)
        self.assertEqual(config.analysis['extractor'], 'poles')
        self.assertEqual(config.overrides, [])
        self.assertIsNone(config.source)

    def test_default_emitter_is_dark(self):
        """Test the default emitter is the tuned non-Markovian atom"""
        emitter = load_config(kind='poles').emitter_config()
        expected = dark_state_config(3, to_internal(0.13), 7)
        self.assertEqual(emitter.n_points, 3)
        self.assertAlmostEqual(emitter.omega_tau, expected.omega_tau, places=12)

    def test_default_braided(self):
        """Test the braided section defaults to the DFI point"""
        braided = load_config(kind='sweep-dfi').braided_config()
        self.assertEqual(braided.gamma, (DFI_GAMMA0,) * 4)
        self.assertEqual(braided.phi, (DFI_PHI0,) * 3)

    def test_missing_kind(self):
        """Test the experiment kind is required"""
        with self.assertRaises(ExperimentConfigError) as caught:
            load_config(self.write('seed: 1\n'))
        self.assertEqual(caught.exception.field, 'kind')


class TestValidation(SettingsTestCase):

    def test_unknown_nested_key(self):
        """Test an unknown key reports its dotted path and line"""
        path = self.write('kind: emit\nemitter:\n  bogus: 1\n')
        with self.assertRaises(ExperimentConfigError) as caught:
            load_config(path)
        self.assertEqual(caught.exception.field, 'emitter.bogus')
        self.assertEqual(caught.exception.line, 3)

    def test_unknown_top_level_key(self):
        """Test unknown sections are rejected"""
        with self.assertRaises(ExperimentConfigError) as caught:
            load_config(self.write('kind: emit\nbogus: 1\n'))
        self.assertEqual(caught.exception.field, 'bogus')
        self.assertEqual(caught.exception.line, 2)

    def test_malformed_number(self):
        """Test a non-numeric value is rejected with its field"""
        path = self.write('kind: emit\nemission:\n  t_max: soon\n')
        with self.assertRaises(ExperimentConfigError) as caught:
            load_config(path)
        self.assertEqual(caught.exception.field, 'emission.t_max')
        self.assertEqual(caught.exception.line, 3)

    def test_malformed_yaml(self):
        """Test YAML syntax errors carry a line"""
        with self.assertRaises(ExperimentConfigError) as caught:
            load_config(self.write('kind: emit\nemitter: [1, 2\n'))
        self.assertIsNotNone(caught.exception.line)

    def test_log_axis_needs_positive_min(self):
        """Test log spacing starting at zero is rejected"""
        text = 'kind: sweep-dfi\ngrid:\n  sigma_g:\n    min: 0\n    max: 0.1\n    count: 4\n    spacing: log\n'
        with self.assertRaises(ExperimentConfigError) as caught:
            load_config(self.write(text))
        self.assertEqual(caught.exception.field, 'grid.sigma_g.min')

    def test_missing_file(self):
        """Test an unreadable file is a configuration error"""
        with self.assertRaises(ExperimentConfigError):
            load_config(str(self.root / 'absent.yaml'))

    def test_top_level_must_be_mapping(self):
        """Test a YAML list is rejected"""
        with self.assertRaises(ExperimentConfigError):
            load_config(self.write('- emit\n'))


class TestOverrides(SettingsTestCase):

    def test_flag_replaces_file_value(self):
        """Test overrides win and are recorded with both values"""
        path = self.write('kind: emit\nseed: 3\n')
        config = load_config(path, overrides={'seed': 5})
        self.assertEqual(config.seed, 5)
        self.assertEqual(config.overrides, [{'key': 'seed', 'file_value': 3, 'flag_value': 5}])
        self.assertEqual(config.source, path)

    def test_nested_override(self):
        """Test dotted keys create nested sections"""
        config = load_config(kind='emit', overrides={'emission.t_max': 5.0})
        self.assertEqual(config.emission['t_max'], 5.0)
        self.assertEqual(config.overrides[0]['key'], 'emission.t_max')
        self.assertIsNone(config.overrides[0]['file_value'])

    def test_parse_override(self):
        """Test values are read as YAML scalars"""
        self.assertEqual(parse_override('emitter.gamma_tau_2pi=0.13'), ('emitter.gamma_tau_2pi', 0.13))
        self.assertEqual(parse_override('grid.sigma_g.spacing=log'), ('grid.sigma_g.spacing', 'log'))
        with self.assertRaises(ExperimentConfigError):
            parse_override('emission.t_max')

    def test_output_dir_precedence(self):
        """Test --out beats output.dir beats the environment beats the default"""
        config = load_config(kind='emit')
        with patch.dict(os.environ, {OUTPUT_DIR_ENV: 'from_env'}):
            self.assertEqual(resolve_output_dir('flag', config), Path('flag'))
            self.assertEqual(resolve_output_dir(None, config), Path('from_env'))
            configured = load_config(kind='emit', overrides={'output.dir': 'from_file'})
            self.assertEqual(resolve_output_dir(None, configured), Path('from_file'))
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_output_dir(None, config), Path('results'))


class TestResolution(SettingsTestCase):

    def test_markovian_preset(self):
        """Test the Markovian preset tunes the dark branch"""
        emitter = load_config(kind='poles', overrides={'emitter.preset': 'markovian'}).emitter_config()
        self.assertAlmostEqual(emitter.gamma_tau, to_internal(1.59e-4), places=15)
        self.assertAlmostEqual(emitter.omega_tau / (2 * math.pi), 0.3332, delta=1e-4)

    def test_explicit_detuning_wins(self):
        """Test an explicit omega_tau_2pi replaces the dark branch"""
        emitter = load_config(kind='poles', overrides={'emitter.omega_tau_2pi': 0.4}).emitter_config()
        self.assertAlmostEqual(emitter.omega_tau, to_internal(0.4), places=14)

    def test_explicit_strengths(self):
        """Test explicit strengths set the number of points"""
        overrides = {'emitter.omega_tau_2pi': 0.4, 'emitter.strengths': [1.0, 0.9]}
        emitter = load_config(kind='emit', overrides=overrides).emitter_config()
        self.assertEqual(emitter.n_points, 2)
        self.assertEqual(emitter.strengths, (1.0, 0.9))

    def test_segments(self):
        """Test configured segments define the comparison atom"""
        text = ('kind: emit\nemitter:\n  segments:\n'
                '    omega_tau_2pi: [2.231, 2.184]\n    gamma_tau_2pi: [0.1299, 0.1286, 0.1329]\n')
        config = load_config(self.write(text))
        segmented = config.segmented_config(config.emitter_config())
        self.assertEqual(segmented.n_points, 3)
        self.assertNotEqual(segmented.strengths[0], segmented.strengths[1])

    def test_inconsistent_segments(self):
        """Test a segment count mismatch names the emitter section"""
        text = ('kind: emit\nemitter:\n  segments:\n'
                '    omega_tau_2pi: [2.231]\n    gamma_tau_2pi: [0.1299, 0.1286, 0.1329]\n')
        config = load_config(self.write(text))
        with self.assertRaises(ExperimentConfigError) as caught:
            config.emitter_config()
        self.assertTrue(caught.exception.field.startswith('emitter'))

    def test_search_window(self):
        """Test the configured half width is centred on the default window"""
        config = load_config(kind='poles', overrides={'spectral.im_half_width': 4.0})
        default = SearchWindow(-3.0, 1e-3, -20.0, -10.0)
        window = config.search_window(config.emitter_config(), default)
        self.assertAlmostEqual(window.im_min, -19.0)
        self.assertAlmostEqual(window.im_max, -11.0)
        self.assertEqual(window.re_min, -3.0)

    def test_disorder_spec(self):
        """Test disorder settings combine with the top-level seed and sample count"""
        config = load_config(kind='sweep-dark', overrides={'disorder.sigma_g': 0.02, 'samples': 7, 'seed': 11})
        spec = config.disorder_spec(sigma_x=0.01)
        self.assertEqual((spec.sigma_g, spec.sigma_x, spec.samples, spec.seed), (0.02, 0.01, 7, 11))


class TestAxis(unittest.TestCase):

    def test_linear(self):
        """Test linear spacing includes both ends"""
        np.testing.assert_allclose(Axis(0.0, 0.05, 6).values(), [0.0, 0.01, 0.02, 0.03, 0.04, 0.05])

    def test_log(self):
        """Test log spacing is geometric"""
        np.testing.assert_allclose(Axis(0.001, 0.1, 3, 'log').values(), [0.001, 0.01, 0.1])

    def test_single_point(self):
        """Test a one-point axis is its minimum"""
        np.testing.assert_array_equal(Axis(0.2, 0.2, 1).values(), [0.2])


if __name__ == '__main__':
    unittest.main(verbosity=2)
