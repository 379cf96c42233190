"""
Test Suite for End-to-End Physics Checks
Dark-state survival, its destruction by disorder, disorder scaling laws of the
single and braided atoms, and agreement between the integrator and the pole
expansion. Sweeps marked slow take minutes; deselect them with -m "not slow".
"""

import math
import unittest

import numpy as np
import pytest

from models import EmitterConfig, DisorderSpec, to_internal
from disorder import sample_configuration
from emission import integrate_emission
from spectral import SearchWindow, dark_state_config, find_poles, mode_sum
from dfi import ideal_braided
from analysis import (
    compare_fits, dde_extractor, disorder_sweep, extract_kappa_min, fit_power_law,
    fitted_tail_mean, kappa_tot_extractor, pole_extractor, tail_mean
)

SCALING_AXIS = np.geomspace(2e-3, 5e-2, 5)


def scaling_exponent(frame, axis: str, column: str = 'kappa_mean') -> float:
    points = frame[[axis, column]].to_numpy(dtype=float)
    return fit_power_law(points).params['alpha']


class TestDarkState(unittest.TestCase):

    def setUp(self):
        """Set up the tuned non-Markovian atom"""
        self.dark = dark_state_config(3, to_internal(0.13), 7)

    def test_dark_pole_and_plateau(self):
        """Test a non-decaying pole exists and |beta|^2 is flat between t = 1000 and 2000"""
        poles = find_poles(self.dark)
        self.assertLess(poles.kappas.min(), 1e-8)
        trajectory = integrate_emission(self.dark, t_max=2000.0)
        p1000 = float(np.abs(trajectory.at(1000.0)) ** 2)
        p2000 = float(trajectory.probability()[-1])
        self.assertLess(abs(p2000 - p1000), 1e-6)
        self.assertGreater(p2000, 0.1)

    def test_disorder_destroys_plateau(self):
        """Test the perturbed segments of the emission figure keep decaying"""
        disordered = EmitterConfig.from_segments(
            self.dark.omega_tau, self.dark.gamma_tau,
            [to_internal(2.231), to_internal(2.184)],
            [to_internal(0.1299), to_internal(0.1286), to_internal(0.1329)],
        )
        self.assertGreater(dde_extractor(t_max=100.0)(disordered), 1e-4)


@pytest.mark.slow
class TestMarkovianScaling(unittest.TestCase):

    def setUp(self):
        """Set up the weakly coupled dark atom"""
        self.base = dark_state_config(3, to_internal(1.59e-4), 1)

    def test_strength_disorder_quadratic(self):
        """Test kappa_min grows as sigma_g^2"""
        frame = disorder_sweep(self.base, SCALING_AXIS, [0.0], samples=100, seed=3,
                               extractor=pole_extractor()).table
        self.assertAlmostEqual(scaling_exponent(frame, 'sigma_g'), 2.0, delta=0.3)

    def test_position_disorder_quadratic(self):
        """Test kappa_min grows as sigma_x^2"""
        frame = disorder_sweep(self.base, [0.0], SCALING_AXIS, samples=100, seed=3,
                               extractor=pole_extractor()).table
        self.assertAlmostEqual(scaling_exponent(frame, 'sigma_x'), 2.0, delta=0.3)

    def test_monotone_on_grid(self):
        """Test the averaged rate increases along both axes"""
        axis = [0.005, 0.01, 0.02]
        frame = disorder_sweep(self.base, axis, axis, samples=100, seed=5, extractor=pole_extractor()).table
        grid = frame['kappa_mean'].to_numpy().reshape(3, 3)
        self.assertTrue(np.all(np.diff(grid, axis=0) > 0))
        self.assertTrue(np.all(np.diff(grid, axis=1) > 0))


@pytest.mark.slow
class TestNonMarkovianScaling(unittest.TestCase):

    def setUp(self):
        """Set up the tuned non-Markovian atom"""
        self.base = dark_state_config(3, to_internal(0.13), 7)

    def test_strength_disorder_quadratic(self):
        """Test kappa_min still grows as sigma_g^2"""
        frame = disorder_sweep(self.base, SCALING_AXIS, [0.0], samples=50, seed=3,
                               extractor=pole_extractor()).table
        self.assertAlmostEqual(scaling_exponent(frame, 'sigma_g'), 2.0, delta=0.3)

    def test_position_disorder_saturates(self):
        """Test the sigma_x curve is better described by the Debye form and matches the saturated tail"""
        frame = disorder_sweep(self.base, [0.0], np.geomspace(1e-3, 1.0, 13), samples=50, seed=3,
                               extractor=pole_extractor()).table
        points = frame[['sigma_x', 'kappa_mean']].to_numpy(dtype=float)
        comparison = compare_fits(points)
        self.assertLess(comparison.debye2.residual, comparison.power_law.residual)
        plateau = fitted_tail_mean(comparison.debye2, points)
        self.assertAlmostEqual(plateau / tail_mean(points), 1.0, delta=0.15)


@pytest.mark.slow
class TestBraidedScaling(unittest.TestCase):

    def setUp(self):
        """Set up the braided pair at the DFI point"""
        self.base = ideal_braided()

    def test_strength_disorder_quadratic(self):
        """Test kappa_tot grows as sigma_g^2"""
        frame = disorder_sweep(self.base, SCALING_AXIS, [0.0], samples=100, seed=3,
                               extractor=kappa_tot_extractor()).table
        self.assertAlmostEqual(scaling_exponent(frame, 'sigma_g'), 2.0, delta=0.3)

    def test_position_disorder_quadratic(self):
        """Test kappa_tot grows as sigma_x^2"""
        frame = disorder_sweep(self.base, [0.0], SCALING_AXIS, samples=100, seed=3,
                               extractor=kappa_tot_extractor()).table
        self.assertAlmostEqual(scaling_exponent(frame, 'sigma_x'), 2.0, delta=0.3)


@pytest.mark.slow
class TestCrossMethod(unittest.TestCase):

    def test_integration_matches_poles(self):
        """Test twenty disordered atoms against their pole expansions"""
        rng = np.random.default_rng(2024)
        spec = DisorderSpec(sigma_g=0.1, sigma_x=0.1, samples=20, seed=41)
        for index in range(spec.samples):
            n_points = int(rng.integers(2, 4))
            base = EmitterConfig.uniform(n_points, to_internal(rng.uniform(0.2, 0.6)), to_internal(0.05))
            config = sample_configuration(base, spec, index)
            window = SearchWindow(-6.0, 1e-3, -config.omega_tau - 12 * math.pi,
                                  -config.omega_tau + 12 * math.pi)
            poles = find_poles(config, window)
            kappas = np.sort(poles.kappas)

            with self.subTest(sample=index, n_points=n_points):
                trajectory = integrate_emission(config, t_max=30.0)
                late = trajectory.times >= 8.0
                error = np.abs(mode_sum(poles, trajectory.times[late]) - trajectory.lab_amplitudes()[late])
                self.assertLess(error.max(), 1e-4)

                gap = kappas[1] - kappas[0] if kappas.size > 1 else math.inf
                t1 = max(5.0 / gap, 10.0)
                t2 = t1 + 2.0 / kappas[0]
                if kappas[0] * t2 > 30.0 or t2 > 2000.0:
                    continue
                long_run = integrate_emission(config, t_max=t2)
                kappa = extract_kappa_min(long_run, t1, t2).kappa
                self.assertAlmostEqual(kappa / kappas[0], 1.0, delta=0.02)


if __name__ == '__main__':
    unittest.main(verbosity=2)
