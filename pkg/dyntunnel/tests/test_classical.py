import unittest

import numpy as np

from dyntunnel.classical.dynamics import ClassicalIntegrator, PhasePoint, StroboscopicMap, chaotic_fraction, \
    integrate_classical, lyapunov_indicator, poincare_section, seed_lattice, split_chunks
from dyntunnel.classical.islands import NewtonSettings, find_period_one_islands
from dyntunnel.errors import NoConvergence, NotElliptic
from dyntunnel.system import DRIVE_PERIOD, SystemParams, hamiltonian_energy


class TestIntegrator(unittest.TestCase):

    def test_energy_conserved_without_drive(self):
        params = SystemParams(1.3, 0.0, 0.5)
        x0 = np.array([0.5, -2.0, 3.0])
        p0 = np.array([0.0, 1.0, -0.4])
        integrator = ClassicalIntegrator(params)
        x, p = integrator.advance(x0, p0, 0.0, 10 * integrator.steps_per_period)
        np.testing.assert_allclose(hamiltonian_energy(x, p, 0.0, params), hamiltonian_energy(x0, p0, 0.0, params),
                                   rtol=0, atol=1e-8)

    def test_origin_is_fixed(self):
        params = SystemParams(2.3, 0.3, 0.5)
        end = integrate_classical(PhasePoint(0.0, 0.0), 3 * DRIVE_PERIOD, params, 512)
        self.assertEqual((end.x, end.p), (0.0, 0.0))
        self.assertAlmostEqual(end.t, 3 * DRIVE_PERIOD)

    def test_reversible(self):
        params = SystemParams(2.3, 0.3, 0.5)
        integrator = ClassicalIntegrator(params, 512)
        x0, p0 = np.array([1.2, -0.7]), np.array([0.3, 1.1])
        n_steps = 3 * 512
        x, p = integrator.advance(x0, p0, 0.0, n_steps)
        xb, pb = integrator.advance(x, p, n_steps * integrator.dt, n_steps, dt=-integrator.dt)
        np.testing.assert_allclose(xb, x0, atol=1e-9)
        np.testing.assert_allclose(pb, p0, atol=1e-9)

    def test_negative_duration(self):
        with self.assertRaises(ValueError):
            integrate_classical(PhasePoint(0.0, 1.0), -1.0, SystemParams(1.3, 0.2, 0.5))


class TestStroboscopicMap(unittest.TestCase):

    def setUp(self):
        self.params = SystemParams(2.3, 0.3, 0.5)
        self.smap = StroboscopicMap(self.params, steps_per_period=512)

    def test_area_preserving(self):
        jac = self.smap.jacobian(np.array([0.4, 2.0, -1.5]), np.array([0.8, -0.5, 0.0]))
        np.testing.assert_allclose(np.linalg.det(jac), 1.0, atol=1e-6)

    def test_time_reversal_symmetry(self):
        # at strobe phase 0 the drive is even in t, so M(T(M(z))) = T(z) with T: p -> -p
        x0, p0 = np.array([0.7, -1.9]), np.array([0.6, 0.2])
        x1, p1 = self.smap(x0, p0)
        x2, p2 = self.smap(x1, -p1)
        np.testing.assert_allclose(x2, x0, atol=1e-8)
        np.testing.assert_allclose(p2, -p0, atol=1e-8)

    def test_section_frame(self):
        seeds = seed_lattice((-2.0, 2.0), (-1.0, 1.0), 3, 2)
        section = poincare_section(seeds, 4, self.params, steps_per_period=256, n_jobs=1)
        frame = section.to_frame()
        self.assertEqual(list(frame.columns), ['seed_id', 'n', 'x', 'p'])
        self.assertEqual(len(frame), 24)
        self.assertEqual(frame['n'].min(), 1)
        self.assertEqual(frame['n'].max(), 4)

    def test_section_independent_of_workers(self):
        seeds = seed_lattice((-2.0, 2.0), (-1.0, 1.0), 3, 3)
        one = poincare_section(seeds, 3, self.params, steps_per_period=128, n_jobs=1)
        chunked = [poincare_section(seeds[c], 3, self.params, steps_per_period=128, n_jobs=1).trajectories
                   for c in split_chunks(len(seeds), 4)]
        np.testing.assert_array_equal(one.trajectories, np.concatenate(chunked))

    def test_undriven_strobe_points_keep_energy(self):
        params = SystemParams(1.3, 0.0, 0.5)
        section = poincare_section([PhasePoint(1.0, 0.5)], 5, params)
        pts = section.trajectories[0]
        energy = hamiltonian_energy(pts[:, 0], pts[:, 1], 0.0, params)
        np.testing.assert_allclose(energy, hamiltonian_energy(1.0, 0.5, 0.0, params), atol=1e-8)

    def test_lyapunov_regular_orbit_small(self):
        params = SystemParams(1.3, 0.0, 0.5)
        rate = lyapunov_indicator(np.array([1.0]), np.array([0.0]), params, n_periods=80, steps_per_period=128)
        self.assertLess(rate[0], 0.05)


class TestSeeds(unittest.TestCase):

    def test_lattice(self):
        seeds = seed_lattice((-1.0, 1.0), (0.0, 2.0), 3, 5)
        self.assertEqual(len(seeds), 15)
        self.assertEqual((seeds[0].x, seeds[0].p), (-1.0, 0.0))

    def test_jitter_deterministic(self):
        a = seed_lattice((-1.0, 1.0), (0.0, 2.0), 4, 4, np.random.default_rng(3))
        b = seed_lattice((-1.0, 1.0), (0.0, 2.0), 4, 4, np.random.default_rng(3))
        self.assertEqual(a, b)

    def test_split_chunks(self):
        chunks = split_chunks(10, 3)
        covered = [i for c in chunks for i in range(10)[c]]
        self.assertEqual(covered, list(range(10)))
        self.assertEqual(len(split_chunks(2, 8)), 2)


class TestIslands(unittest.TestCase):

    def test_mirror_pair(self):
        params = SystemParams(2.3, 0.3, 0.5)
        plus, minus = find_period_one_islands(params, settings=NewtonSettings(n_seeds=12), steps_per_period=512)
        self.assertGreater(plus.p_star, 0)
        self.assertAlmostEqual(minus.x_star, -plus.x_star, delta=1e-6)
        self.assertAlmostEqual(minus.p_star, -plus.p_star, delta=1e-6)
        self.assertTrue(plus.is_elliptic)
        self.assertTrue(minus.is_elliptic)

        smap = StroboscopicMap(params, steps_per_period=512)
        x, p = smap(np.array([plus.x_star]), np.array([plus.p_star]))
        self.assertAlmostEqual(float(x[0]), plus.x_star, delta=1e-8)
        self.assertAlmostEqual(float(p[0]), plus.p_star, delta=1e-8)

    def test_undriven_map_has_no_island(self):
        # without drive the resonant tori are parabolic families, not isolated elliptic points
        params = SystemParams(1.3, 0.0, 0.5)
        with self.assertRaises((NoConvergence, NotElliptic)):
            find_period_one_islands(params, settings=NewtonSettings(n_seeds=8, max_iter=15), steps_per_period=256)


class TestChaoticFraction(unittest.TestCase):

    def test_grows_with_drive(self):
        seeds = seed_lattice((-6.0, 6.0), (-3.0, 3.0), 8, 8)
        fractions = [chaotic_fraction(seeds, SystemParams(2.3, epsilon, 0.5), n_periods=200, threshold=1e-2,
                                      steps_per_period=128)
                     for epsilon in (0.1, 0.2, 0.3)]
        self.assertLessEqual(fractions[0], fractions[1])
        self.assertLessEqual(fractions[1], fractions[2])
        self.assertGreater(fractions[2], 0.0)


if __name__ == '__main__':
    unittest.main()
