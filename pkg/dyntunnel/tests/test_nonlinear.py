import unittest
from unittest import mock

import numpy as np

from dyntunnel.errors import ContinuationStuck, GridMismatch
from dyntunnel.quantum import nonlinear
from dyntunnel.quantum.floquet import EVEN, FloquetSettings, FloquetState, floquet_spectrum, quasi_energy, \
    static_basis
from dyntunnel.quantum.nonlinear import NonlinearSettings, continuation_schedule, energy_derivative, \
    floquet_residual, solution_at, solve_nonlinear_floquet
from dyntunnel.quantum.propagator import PropagatorConfig
from dyntunnel.quantum.relax import imaginary_time_ground_state
from dyntunnel.system import DRIVE_PERIOD, SpatialGrid, SystemParams
from dyntunnel.utils import fold_to_window

GRID = SpatialGrid(12.0, 128)
CONFIG = PropagatorConfig(steps_per_period=512, splitting_order=4)
FLOQUET = FloquetSettings(basis_size=32, n_phases=4)
SETTINGS = NonlinearSettings(residual_tol=1e-12)


def undriven_ground_state(params: SystemParams) -> FloquetState:
    basis = static_basis(params, GRID, FLOQUET.basis_size)
    phi = basis.vectors[:, 0].astype(complex)
    return FloquetState(GRID, np.stack([phi] * FLOQUET.n_phases),
                        quasi_energy(np.exp(-1j * basis.energies[0] * DRIVE_PERIOD / params.hbar_eff),
                                     params.hbar_eff),
                        EVEN, hbar_eff=params.hbar_eff)


class TestContinuationSchedule(unittest.TestCase):

    def test_default_schedule(self):
        values = continuation_schedule(0.0, 0.12, NonlinearSettings())
        self.assertEqual(len(values), 21)
        self.assertEqual(values[0], 0.005)
        self.assertEqual(values[19], 0.1)
        self.assertEqual(values[-1], 0.12)

    def test_fixed_step(self):
        self.assertEqual(continuation_schedule(0.0, 0.12, NonlinearSettings(), 0.05), [0.05, 0.1, 0.12])
        self.assertEqual(continuation_schedule(0.02, 0.02, NonlinearSettings(), 0.05), [])


class TestResidual(unittest.TestCase):

    def setUp(self):
        self.params = SystemParams(1.3, 0.0, 0.5)
        self.seed = undriven_ground_state(self.params)

    def test_linear_eigenstate_has_small_residual(self):
        cost, field = floquet_residual(self.seed.snapshot(0), self.seed.eigenvalue, 0.0, self.params, CONFIG)
        self.assertLess(cost, 1e-12)
        self.assertEqual(field.shape, (GRID.n_points,))

    def test_rejects_unnormalized(self):
        phi = self.seed.snapshot(0)
        with self.assertRaises(ValueError):
            floquet_residual(phi.with_amplitudes(2 * phi.amplitudes), 0.0, 0.0, self.params, CONFIG)

    def test_energy_derivative(self):
        phi = self.seed.snapshot(0)
        energy, h = 0.1, 1e-6
        _, r1 = floquet_residual(phi, energy + h, 0.0, self.params, CONFIG)
        _, r0 = floquet_residual(phi, energy - h, 0.0, self.params, CONFIG)
        np.testing.assert_allclose((r1 - r0) / (2 * h), energy_derivative(phi.amplitudes, energy, 0.5), atol=1e-6)


class TestContinuation(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = SystemParams(1.3, 0.0, 0.5)
        cls.seed = undriven_ground_state(cls.params)
        cls.branch = solve_nonlinear_floquet(cls.seed, 0.05, cls.params, GRID, 0.05, CONFIG, FLOQUET, SETTINGS)

    def test_matches_stationary_state(self):
        self.assertEqual(len(self.branch), 1)
        solution = solution_at(self.branch, 0.05)
        self.assertLess(solution.residual, SETTINGS.residual_tol)
        self.assertEqual(solution.parity, EVEN)
        self.assertIsNone(solution.continuation_parent)

        _, mu = imaginary_time_ground_state(self.params, GRID, u_nl=0.05)
        self.assertAlmostEqual(fold_to_window(solution.energy - mu, self.params.hbar_eff), 0.0, delta=1e-5)

        cost, _ = floquet_residual(solution.state.snapshot(0), solution.energy, 0.05, self.params, CONFIG)
        self.assertLess(cost, 1e-10)
        self.assertEqual(solution.state.n_phases, FLOQUET.n_phases)

    def test_continue_from_solution(self):
        more = solve_nonlinear_floquet(self.branch[-1], 0.06, self.params, GRID, 0.01, CONFIG, FLOQUET, SETTINGS)
        self.assertEqual([s.u_nl for s in more], [0.06])
        self.assertEqual(more[0].continuation_parent, self.branch[-1].solution_id)
        self.assertGreater(more[0].energy - self.branch[-1].energy, 0.0)

    def test_no_steps(self):
        self.assertEqual(solve_nonlinear_floquet(self.branch[-1], 0.05, self.params, GRID, None, CONFIG,
                                                 FLOQUET, SETTINGS), [])
        with self.assertRaises(ValueError):
            solve_nonlinear_floquet(self.branch[-1], 0.01, self.params, GRID, None, CONFIG, FLOQUET, SETTINGS)
        with self.assertRaises(KeyError):
            solution_at(self.branch, 0.04)

    def test_failed_step_is_bisected(self):
        real = nonlinear._levenberg_marquardt
        failed = []

        def first_full_step_fails(problem, z, settings):
            if not failed and abs(problem.params.u_nl - 0.06) < 1e-12:
                failed.append(problem.params.u_nl)
                return z, float('inf'), 0
            return real(problem, z, settings)

        with mock.patch.object(nonlinear, '_levenberg_marquardt', side_effect=first_full_step_fails):
            more = solve_nonlinear_floquet(self.branch[-1], 0.06, self.params, GRID, 0.01, CONFIG, FLOQUET, SETTINGS)
        self.assertEqual(len(more), 2)
        self.assertAlmostEqual(more[0].u_nl, 0.055)
        self.assertAlmostEqual(more[1].u_nl, 0.06)
        self.assertEqual(more[0].continuation_parent, self.branch[-1].solution_id)
        self.assertEqual(more[1].continuation_parent, more[0].solution_id)
        self.assertLess(more[1].residual, SETTINGS.residual_tol)

    def test_stuck_reports_last_good_u(self):
        real = nonlinear._levenberg_marquardt
        tried = []

        def fails_above(problem, z, settings):
            if problem.params.u_nl > 0.06 + 1e-12:
                tried.append(problem.params.u_nl)
                return z, float('inf'), 0
            return real(problem, z, settings)

        with mock.patch.object(nonlinear, '_levenberg_marquardt', side_effect=fails_above):
            with self.assertRaises(ContinuationStuck) as ctx:
                solve_nonlinear_floquet(self.branch[-1], 0.08, self.params, GRID, 0.01, CONFIG, FLOQUET, SETTINGS)
        self.assertAlmostEqual(ctx.exception.last_good_u, 0.06)
        self.assertEqual(len(tried), SETTINGS.bisections + 1)
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_grid_mismatch(self):
        with self.assertRaises(GridMismatch):
            solve_nonlinear_floquet(self.seed, 0.05, self.params, SpatialGrid(12.0, 256), 0.05, CONFIG,
                                    FLOQUET, SETTINGS)


class TestDrivenContinuation(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = SystemParams(1.3, 0.2, 0.5)
        cls.floquet = FloquetSettings(basis_size=32, n_phases=4, leak_tol=1e-2, guard_fraction=0.5)
        spectrum = floquet_spectrum(cls.params, GRID, CONFIG, cls.floquet)
        cls.seed = min((s for s in spectrum if s.parity == EVEN), key=lambda s: s.mean_energy)
        cls.settings = NonlinearSettings()
        cls.branch = solve_nonlinear_floquet(cls.seed, 0.02, cls.params, GRID, 0.01, CONFIG, cls.floquet,
                                             cls.settings)

    def test_self_consistent_even_state(self):
        self.assertEqual([s.u_nl for s in self.branch], [0.01, 0.02])
        solution = self.branch[-1]
        self.assertEqual(solution.parity, EVEN)
        phi0 = solution.state.snapshot(0)
        for k in range(solution.state.n_phases):
            self.assertAlmostEqual(solution.state.snapshot(k).norm(), 1.0, places=8)

        cost, _ = floquet_residual(phi0, solution.energy, 0.02, self.params, CONFIG)
        self.assertLess(cost, self.settings.residual_tol)
        np.testing.assert_allclose(phi0.reflected().amplitudes, phi0.amplitudes, atol=1e-6)


if __name__ == '__main__':
    unittest.main()
