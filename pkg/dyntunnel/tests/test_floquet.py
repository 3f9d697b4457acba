import math
import unittest

import numpy as np

from dyntunnel.classical.islands import NewtonSettings, find_period_one_islands
from dyntunnel.quantum.floquet import EVEN, ODD, FloquetSettings, FloquetState, floquet_spectrum, \
    identify_tunnelling_doublet, make_doublet, mean_momentum, monodromy_matrix, quasi_energy, real_gauge, \
    spectrum_frame, static_basis
from dyntunnel.quantum.husimi import husimi, island_mass, island_radius
from dyntunnel.quantum.propagator import PropagatorConfig, evolve_stroboscopic, propagate_period
from dyntunnel.system import DRIVE_PERIOD, SpatialGrid, SystemParams, WaveFunction, coherent_state

GRID = SpatialGrid(16.0, 256)
CONFIG = PropagatorConfig(steps_per_period=1024, splitting_order=4)
FAST = PropagatorConfig(steps_per_period=256)
SETTINGS = FloquetSettings(basis_size=64, n_phases=4, leak_tol=1e-2, guard_fraction=0.5)


class TestStaticBasis(unittest.TestCase):

    def test_orthonormal_with_alternating_parity(self):
        basis = static_basis(SystemParams(1.3, 0.2, 0.5), GRID, 32)
        gram = GRID.dx * basis.vectors.conj().T @ basis.vectors
        np.testing.assert_allclose(gram, np.eye(32), atol=1e-10)
        self.assertEqual(list(basis.parity[:4]), [1, -1, 1, -1])
        self.assertTrue(np.all(np.diff(basis.energies) > 0))
        self.assertEqual(len(basis.block(EVEN)) + len(basis.block(ODD)), 32)

    def test_basis_larger_than_grid(self):
        with self.assertRaises(ValueError):
            static_basis(SystemParams(1.3, 0.2, 0.5), SpatialGrid(8.0, 16), 32)


class TestMonodromy(unittest.TestCase):

    def test_undriven_is_diagonal(self):
        params = SystemParams(1.3, 0.0, 0.5)
        matrix = monodromy_matrix(params, 64, GRID, CONFIG, SETTINGS)
        energies = static_basis(params, GRID, 64).energies
        expected = np.diag(np.exp(-1j * energies[:16] * DRIVE_PERIOD / params.hbar_eff))
        np.testing.assert_allclose(matrix[:16, :16], expected, atol=1e-5)

    def test_unitary_and_parity_blocks(self):
        params = SystemParams(1.3, 0.2, 0.5)
        matrix = monodromy_matrix(params, 64, GRID, CONFIG, SETTINGS)
        np.testing.assert_allclose(matrix @ matrix.conj().T, np.eye(64), atol=1e-10)
        parity = static_basis(params, GRID, 64).parity
        self.assertEqual(float(np.max(np.abs(matrix[np.ix_(parity > 0, parity < 0)]))), 0.0)

    def test_nonlinear_rejected(self):
        with self.assertRaises(ValueError):
            monodromy_matrix(SystemParams(1.3, 0.2, 0.5, u_nl=0.01), 64, GRID, CONFIG, SETTINGS)


class TestFloquetSpectrum(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = SystemParams(1.3, 0.2, 0.5)
        cls.spectrum = floquet_spectrum(cls.params, GRID, CONFIG, SETTINGS)

    def test_sorted_and_folded(self):
        values = [s.eigenvalue for s in self.spectrum]
        self.assertEqual(values, sorted(values))
        window = self.params.hbar_eff
        self.assertTrue(all(-window / 2 < v <= window / 2 for v in values))
        frame = spectrum_frame(self.spectrum)
        self.assertEqual(list(frame.columns), ['index', 'quasi_energy', 'parity', 'island_weight', 'mean_energy'])

    def test_modes_are_periodic(self):
        hbar = self.params.hbar_eff
        for state in sorted(self.spectrum, key=lambda s: s.mean_energy)[:3]:
            start = state.snapshots[0]
            after = propagate_period(start, self.params, GRID, CONFIG)
            expected = np.exp(-1j * state.eigenvalue * DRIVE_PERIOD / hbar) * start
            np.testing.assert_allclose(after, expected, atol=1e-6)
            self.assertEqual(state.n_phases, 4)
            self.assertAlmostEqual(state.snapshot(2).time_tag, math.pi)

    def test_real_at_phase_zero(self):
        for state in sorted(self.spectrum, key=lambda s: s.mean_energy)[:4]:
            amps = real_gauge(state).snapshots[0]
            self.assertLess(float(np.max(np.abs(amps.imag))), 1e-6 * float(np.max(np.abs(amps))))

    def test_independent_of_strobe_phase(self):
        shifted = floquet_spectrum(self.params, GRID, CONFIG,
                                   FloquetSettings(basis_size=64, n_phases=4, leak_tol=1e-2, guard_fraction=0.5,
                                                   strobe_phase=math.pi / 2))
        others = np.array([s.eigenvalue for s in shifted])
        window = self.params.hbar_eff
        for state in self.spectrum:
            if state.mean_energy < 4.0:
                diffs = np.abs((others - state.eigenvalue + window / 2) % window - window / 2)
                self.assertLess(float(np.min(diffs)), 1e-6)


class TestQuasiEnergy(unittest.TestCase):

    def test_fold(self):
        hbar = 0.5
        for lam in (0.1, -0.2, 0.249):
            self.assertAlmostEqual(quasi_energy(np.exp(-1j * lam * DRIVE_PERIOD / hbar), hbar), lam, places=12)
        self.assertAlmostEqual(quasi_energy(np.exp(-1j * 0.3 * DRIVE_PERIOD / hbar), hbar), -0.2, places=12)


class TestDoublet(unittest.TestCase):

    def setUp(self):
        self.params = SystemParams(1.3, 0.2, 0.5)
        a = coherent_state(0.0, 2.0, self.params, GRID).amplitudes
        b = coherent_state(0.0, -2.0, self.params, GRID).amplitudes
        even = (a + b) / np.sqrt(np.real(GRID.integrate(np.abs(a + b) ** 2)))
        odd = (a - b) / 1j
        odd = odd / np.sqrt(np.real(GRID.integrate(np.abs(odd) ** 2)))
        self.even = FloquetState(GRID, np.stack([even, even]), 0.24, EVEN, hbar_eff=0.5)
        # opposite sign: (even + i odd) starts out moving to negative p
        self.odd = FloquetState(GRID, np.stack([-odd, -odd]), -0.245, ODD, hbar_eff=0.5)

    def test_folded_splitting_and_orientation(self):
        doublet = make_doublet(self.even, self.odd, self.params, None, SETTINGS)
        self.assertAlmostEqual(doublet.delta_lambda, 0.015, places=12)
        self.assertAlmostEqual(doublet.u_e.eigenvalue - doublet.u_o.eigenvalue, -0.015, places=12)
        self.assertAlmostEqual(doublet.t_lin, 2 * math.pi * 0.5 / 0.015)
        self.assertAlmostEqual(doublet.t_lin_periods, 0.5 / 0.015)

        plus, minus = doublet.island_modes()
        self.assertGreater(mean_momentum(plus[0], GRID, 0.5), 0.5)
        self.assertLess(mean_momentum(minus[0], GRID, 0.5), -0.5)


class TestTunnellingDoublet(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = SystemParams(1.3, 0.2, 0.5)
        cls.islands = find_period_one_islands(cls.params, settings=NewtonSettings(n_seeds=16), steps_per_period=512)
        spectrum = floquet_spectrum(cls.params, GRID, FAST, SETTINGS)
        cls.doublet, _ = identify_tunnelling_doublet(spectrum, cls.islands, cls.params, SETTINGS)
        plus, minus = cls.doublet.island_modes()
        cls.plus = WaveFunction(GRID, plus[0]).normalized()
        cls.minus = WaveFunction(GRID, minus[0]).normalized()

    def test_plus_mode_sits_on_upper_island(self):
        q = husimi(self.plus, self.params, SETTINGS.husimi)
        radius = island_radius(self.islands[0].p_star, self.params.hbar_eff)
        m_plus, m_minus = island_mass(q, self.islands, radius)
        self.assertGreater(m_plus, 0.8 * (m_plus + m_minus))
        self.assertGreater(mean_momentum(self.plus.amplitudes, GRID, self.params.hbar_eff), 0.0)

    def test_parity_maps_plus_onto_minus(self):
        np.testing.assert_allclose(self.plus.reflected().amplitudes, self.minus.amplitudes, atol=1e-6)
        q_plus = husimi(self.plus, self.params)
        q_minus = husimi(self.minus, self.params)
        np.testing.assert_allclose(q_plus.reflected().values, q_minus.values, atol=1e-8)

    def test_linear_beat(self):
        # at U = 0 the doublet is an exact two-level system: |d+(n)|^2 = cos^2(pi n / T_lin)
        t_lin = self.doublet.t_lin_periods
        n_periods = int(min(math.ceil(t_lin / 2), 150))
        populations = []
        evolve_stroboscopic(self.plus, n_periods, self.params, FAST,
                            callback=lambda record, psi: populations.append(abs(self.plus.inner(psi)) ** 2))
        expected = np.cos(np.pi * np.arange(n_periods + 1) / t_lin) ** 2
        rms = float(np.sqrt(np.mean(np.square(np.array(populations) - expected))))
        self.assertLess(rms, 1e-3)


if __name__ == '__main__':
    unittest.main()
