"""
Test Suite for Decay-Rate Analysis
Tests rate extraction, ensemble averaging, disorder sweeps and the
power-law and extended-Debye fits
"""

import math
import unittest
from unittest.mock import Mock, patch

import numpy as np
from scipy.special import bernoulli

from models import EmitterConfig, DisorderSpec
from emission import AmplitudeTrajectory, Frame
from spectral import dark_state_config
from dfi import ideal_braided
from analysis import (
    AnalysisError, FitModel, SampleFailure, compare_fits, dde_extractor, debye2,
    disorder_sweep, ensemble_average, extract_kappa_min, fit_debye2, fit_power_law,
    fitted_tail_mean, kappa_tot_extractor, pole_extractor, tail_mean
)

ZETA3 = 1.2020569031595942


def synthetic(beta, t_max: float, dt: float) -> AmplitudeTrajectory:
    times = np.arange(int(round(t_max / dt)) + 1) * dt
    return AmplitudeTrajectory(times, beta(times).astype(complex), Frame.LAB, 0.0, dt)


class TestRateExtraction(unittest.TestCase):

    def test_single_exponential(self):
        """Test kappa of a pure exponential"""
        trajectory = synthetic(lambda t: np.exp(-0.3 * t), 10.0, 0.01)
        estimate = extract_kappa_min(trajectory, 5.0, 10.0)
        self.assertAlmostEqual(estimate.kappa, 0.3, places=9)
        self.assertAlmostEqual(estimate.plateau, math.exp(-6.0), places=12)

    def test_slowest_mode_dominates(self):
        """Test a fast component is invisible at late times"""
        trajectory = synthetic(lambda t: 0.5 * np.exp(-0.01 * t) + 0.5 * np.exp(-t), 1000.0, 0.5)
        self.assertAlmostEqual(extract_kappa_min(trajectory, 500.0, 1000.0).kappa, 0.01, delta=1e-6)

    def test_phase_and_scale_invariance(self):
        """Test global phases and amplitudes do not change the rate"""
        plain = synthetic(lambda t: np.exp(-0.2 * t), 20.0, 0.02)
        scaled = synthetic(lambda t: 3.0 * np.exp(0.7j) * np.exp(-0.2 * t), 20.0, 0.02)
        self.assertAlmostEqual(extract_kappa_min(plain).kappa, extract_kappa_min(scaled).kappa, places=12)

    def test_default_window(self):
        """Test the default times sit at 0.6 and 0.95 of the trajectory"""
        estimate = extract_kappa_min(synthetic(lambda t: np.exp(-0.1 * t), 20.0, 0.02))
        self.assertAlmostEqual(estimate.t1, 12.0)
        self.assertAlmostEqual(estimate.t2, 19.0)

    def test_underflow(self):
        """Test a vanished amplitude raises instead of returning noise"""
        trajectory = synthetic(lambda t: np.exp(-t), 50.0, 0.1)
        with self.assertRaises(AnalysisError):
            extract_kappa_min(trajectory, 40.0, 45.0)

    def test_invalid_times(self):
        """Test t1 < t2 <= end is enforced"""
        trajectory = synthetic(lambda t: np.exp(-t), 5.0, 0.1)
        with self.assertRaises(AnalysisError):
            extract_kappa_min(trajectory, 3.0, 2.0)
        with self.assertRaises(AnalysisError):
            extract_kappa_min(trajectory, 1.0, 6.0)


class TestExtractors(unittest.TestCase):

    def setUp(self):
        """Set up a single-point atom"""
        self.small = EmitterConfig.uniform(1, 2.0, 0.5)

    def test_pole_extractor(self):
        """Test the slowest-pole rate of a single point is gamma/2"""
        self.assertAlmostEqual(pole_extractor()(self.small), 0.25, places=12)

    def test_dde_extractor(self):
        """Test the two-time rate of a single point is gamma/2"""
        self.assertAlmostEqual(dde_extractor(t_max=20.0, dt=0.05)(self.small), 0.25, places=6)

    def test_kappa_tot_extractor(self):
        """Test the braided extractor vanishes at the DFI point"""
        self.assertAlmostEqual(kappa_tot_extractor()(ideal_braided()), 0.0, delta=1e-12)


class TestEnsembles(unittest.TestCase):

    def setUp(self):
        """Set up the dark atom and the braided pair"""
        self.dark = dark_state_config(3, 2 * math.pi * 0.13, 7)
        self.braided = ideal_braided()

    def test_clean_ensemble(self):
        """Test a disorder-free ensemble reproduces the dark rate with zero error"""
        result = ensemble_average(self.dark, DisorderSpec(samples=5), pole_extractor())
        self.assertLess(result.mean, 1e-8)
        self.assertEqual(result.stderr, 0.0)
        self.assertEqual(result.n_ok, 5)

    def test_failed_samples_excluded(self):
        """Test failing samples are recorded and left out of the mean"""
        extractor = Mock(side_effect=[1.0, AnalysisError('diverged'), 3.0])
        result = ensemble_average(self.dark, DisorderSpec(sigma_g=0.1, samples=3, seed=4), extractor)
        self.assertEqual(extractor.call_count, 3)
        self.assertAlmostEqual(result.mean, 2.0)
        self.assertAlmostEqual(result.stderr, 1.0)
        self.assertEqual(result.n_failed, 1)
        self.assertEqual(result.failures[0]['sample'], 1)

    def test_all_samples_fail(self):
        """Test an ensemble with no surviving sample raises SampleFailure"""
        extractor = Mock(side_effect=AnalysisError('underflow'))
        with self.assertRaises(SampleFailure) as caught:
            ensemble_average(self.dark, DisorderSpec(sigma_g=0.1, samples=2), extractor)
        self.assertEqual(caught.exception.sample, 0)

    def test_threads_are_deterministic(self):
        """Test thread count does not change the reduced result"""
        spec = DisorderSpec(sigma_g=0.05, sigma_x=0.05, samples=16, seed=9)
        serial = ensemble_average(self.braided, spec, kappa_tot_extractor(), threads=1)
        parallel = ensemble_average(self.braided, spec, kappa_tot_extractor(), threads=4)
        np.testing.assert_allclose(parallel.values, serial.values, rtol=1e-12)
        self.assertAlmostEqual(parallel.mean, serial.mean, places=15)

    def test_sweep_table(self):
        """Test the sweep grid layout and its clean corner"""
        frame = disorder_sweep(self.braided, [0.0, 0.01, 0.02], [0.0, 0.01], samples=8, seed=1,
                               extractor=kappa_tot_extractor()).table
        self.assertEqual(list(frame.columns),
                         ['sigma_g', 'sigma_x', 'kappa_mean', 'kappa_stderr', 'n_ok', 'n_failed'])
        self.assertEqual(len(frame), 6)
        self.assertEqual(list(frame['sigma_g']), [0.0, 0.0, 0.01, 0.01, 0.02, 0.02])
        self.assertLess(frame['kappa_mean'].iloc[0], 1e-12)
        strengths_only = frame[frame['sigma_x'] == 0.0]['kappa_mean'].to_numpy()
        self.assertTrue(np.all(np.diff(strengths_only) > 0))

    def test_sweep_keeps_samples(self):
        """Test every sample of every grid point is kept with its rate"""
        sweep = disorder_sweep(self.braided, [0.01, 0.02], [0.0], samples=4, seed=1,
                               extractor=kappa_tot_extractor())
        samples = sweep.samples
        self.assertEqual(list(samples.columns), ['sigma_g', 'sigma_x', 'sample', 'kappa', 'error'])
        self.assertEqual(len(samples), 8)
        self.assertEqual(list(samples['sample']), [0, 1, 2, 3, 0, 1, 2, 3])
        means = samples.groupby('sigma_g')['kappa'].mean().to_numpy()
        np.testing.assert_allclose(means, sweep.table['kappa_mean'].to_numpy(), rtol=1e-12)

    def test_failed_sample_records(self):
        """Test a failed sample keeps its index and reason in the records"""
        extractor = Mock(side_effect=[1.0, AnalysisError('diverged'), 3.0])
        result = ensemble_average(self.dark, DisorderSpec(sigma_g=0.1, samples=3, seed=4), extractor)
        records = result.records()
        self.assertEqual([row['sample'] for row in records], [0, 1, 2])
        self.assertTrue(math.isnan(records[1]['kappa']))
        self.assertEqual(records[1]['error'], 'AnalysisError: diverged')
        self.assertEqual(records[2]['kappa'], 3.0)


class TestDebyeFunction(unittest.TestCase):

    def test_zero(self):
        """Test no disorder gives no decay"""
        self.assertEqual(debye2(0.0, 1.0, 1.0), 0.0)

    def test_unit_value(self):
        """Test sigma = h = w = 1 against the Bernoulli series"""
        b = bernoulli(40)
        series = 2.0 * sum(b[n] / (math.factorial(n) * (n + 2)) for n in range(41))
        value = debye2(1.0, 1.0, 1.0)
        self.assertAlmostEqual(value, series, places=9)
        self.assertAlmostEqual(value, 0.70786, delta=1e-4)

    def test_small_sigma_limit(self):
        """Test the quadratic onset 4 zeta(3) h (w sigma)^2"""
        value = debye2(1e-3, 0.7, 2.0)
        expected = 4.0 * ZETA3 * 0.7 * (2e-3) ** 2
        self.assertAlmostEqual(value / expected, 1.0, delta=1e-6)

    def test_large_sigma_limit(self):
        """Test saturation at h"""
        self.assertAlmostEqual(debye2(1e4, 2.0, 1.0), 2.0, delta=2e-4)

    def test_monotone_and_bounded(self):
        """Test the curve rises monotonically and never exceeds h"""
        values = debye2(np.logspace(-3, 2, 30), 0.5, 3.0)
        self.assertTrue(np.all(np.diff(values) > 0))
        self.assertTrue(np.all(values <= 0.5))

    def test_invalid_parameters(self):
        """Test non-positive scales and negative sigma are rejected"""
        with self.assertRaises(AnalysisError):
            debye2(0.1, 0.0, 1.0)
        with self.assertRaises(AnalysisError):
            debye2(-0.1, 1.0, 1.0)


class TestFits(unittest.TestCase):

    def setUp(self):
        """Set up a log-spaced deviation axis"""
        self.sigma = np.logspace(-3, -1, 8)

    def test_quadratic_power_law(self):
        """Test kappa = 5 sigma^2 is recovered exactly"""
        fit = fit_power_law(np.column_stack([self.sigma, 5.0 * self.sigma ** 2]))
        self.assertAlmostEqual(fit.params['alpha'], 2.0, places=10)
        self.assertAlmostEqual(fit.params['c'], 5.0, places=8)
        self.assertLess(fit.residual, 1e-10)
        np.testing.assert_allclose(fit.predict(self.sigma), 5.0 * self.sigma ** 2, rtol=1e-8)

    def test_fractional_power_law(self):
        """Test kappa = 3 sigma^1.5"""
        fit = fit_power_law(np.column_stack([self.sigma, 3.0 * self.sigma ** 1.5]))
        self.assertAlmostEqual(fit.params['alpha'], 1.5, places=10)
        self.assertEqual(fit.as_row()['model'], 'power_law')

    def test_power_law_needs_spread(self):
        """Test degenerate inputs are rejected"""
        with self.assertRaises(AnalysisError):
            fit_power_law([[0.1, 1.0], [0.1, 2.0], [0.1, 3.0]])
        with self.assertRaises(AnalysisError):
            fit_power_law([[0.1, 1.0], [0.2, 2.0]])
        with self.assertRaises(AnalysisError):
            fit_power_law([[0.0, 1.0], [0.1, 0.0], [0.2, 2.0], [0.3, -1.0]])

    def test_debye_recovery(self):
        """Test h and w are recovered from noisy saturating data"""
        rng = np.random.default_rng(0)
        sigma = np.logspace(-3, 0, 12)
        kappa = debye2(sigma, 0.004, 12.0) * (1.0 + 0.01 * rng.standard_normal(sigma.size))
        fit = fit_debye2(np.column_stack([sigma, kappa]))
        self.assertAlmostEqual(fit.params['h'] / 0.004, 1.0, delta=0.05)
        self.assertAlmostEqual(fit.params['w'] / 12.0, 1.0, delta=0.10)
        self.assertEqual(list(fit.as_row()), ['model', 'param1', 'param2', 'residual'])

    def test_debye_needs_a_decade(self):
        """Test a narrow sigma range is rejected"""
        sigma = np.linspace(0.1, 0.5, 6)
        with self.assertRaises(AnalysisError):
            fit_debye2(np.column_stack([sigma, sigma ** 2]))

    def test_refinement_overflow(self):
        """Test an overflow inside the refinement falls back to the grid optimum"""
        sigma = np.logspace(-3, 0, 12)
        points = np.column_stack([sigma, debye2(sigma, 0.004, 12.0)])
        with patch('analysis.least_squares', side_effect=OverflowError('math range error')):
            fit = fit_debye2(points)
        self.assertFalse(fit.converged)
        self.assertTrue(all(math.isfinite(v) and v > 0 for v in fit.params.values()))

    def test_fitted_tail_mean(self):
        """Test the fitted curve on the largest sigma values matches the data there"""
        points = np.column_stack([self.sigma, 5.0 * self.sigma ** 2])
        fit = fit_power_law(points)
        self.assertAlmostEqual(fitted_tail_mean(fit, points) / tail_mean(points), 1.0, places=8)

        sigma = np.logspace(-3, 0, 12)
        saturating = np.column_stack([sigma, debye2(sigma, 0.004, 12.0)])
        debye_fit = fit_debye2(saturating)
        self.assertAlmostEqual(fitted_tail_mean(debye_fit, saturating) / tail_mean(saturating), 1.0, delta=1e-2)
        with self.assertRaises(AnalysisError):
            fitted_tail_mean(fit, points[:2])

    def test_comparison_prefers_saturation(self):
        """Test the Debye model wins on saturating data"""
        sigma = np.logspace(-3, 0, 12)
        comparison = compare_fits(np.column_stack([sigma, debye2(sigma, 0.004, 12.0)]))
        self.assertIs(comparison.best, FitModel.DEBYE2)

    def test_comparison_prefers_power_law(self):
        """Test a fractional power law is not mistaken for saturation"""
        sigma = np.logspace(-3, 0, 12)
        comparison = compare_fits(np.column_stack([sigma, 3.0 * sigma ** 1.5]))
        self.assertIs(comparison.best, FitModel.POWER_LAW)

    def test_tail_mean(self):
        """Test the mean of the largest-sigma points"""
        points = [[0.4, 4.0], [0.1, 1.0], [0.3, 3.0], [0.2, 2.0]]
        self.assertAlmostEqual(tail_mean(points), 3.0)
        self.assertAlmostEqual(tail_mean(points, k=1), 4.0)
        with self.assertRaises(AnalysisError):
            tail_mean(points, k=5)


if __name__ == '__main__':
    unittest.main(verbosity=2)
