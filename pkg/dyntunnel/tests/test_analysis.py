import os
import tempfile
import unittest
from unittest import mock

import numpy as np

from dyntunnel.analysis.analyze import MARGINAL, TRAPPED, TUNNELLING, extract_tunnelling_period, \
    tunnelling_rate, zero_crossings
from dyntunnel.analysis.experiments import bisect_onset, classify_twomode, sweep
from dyntunnel.analysis.parameters import all_params, load_config, read_config_file
from dyntunnel.analysis.result import IssueLog, RunRecord, TableResult
from dyntunnel.errors import ConfigError, SeriesTooShort
from dyntunnel.quantum.propagator import StroboscopicRecord
from dyntunnel.system import SystemParams
from dyntunnel.twomode.couplings import CouplingCoefficients

REQUIRED = {'kappa': '1.3', 'epsilon': '0.2', 'hbar_eff': '0.5'}


class TestPeriodExtraction(unittest.TestCase):

    def test_cosine(self):
        n = np.arange(1501)
        extraction = extract_tunnelling_period(np.cos(2 * np.pi * n / 500))
        self.assertEqual(extraction.classification, TUNNELLING)
        self.assertAlmostEqual(extraction.period, 500.0, delta=1e-6)
        self.assertEqual(len(extraction.crossings), 6)
        self.assertAlmostEqual(tunnelling_rate(extraction), 1 / 500.0)

    def test_refined_period(self):
        n = np.arange(1000)
        extraction = extract_tunnelling_period(np.cos(2 * np.pi * n / 80.0 + 0.3))
        self.assertAlmostEqual(extraction.period, 80.0, delta=0.5)

    def test_single_crossing(self):
        n = np.arange(201)
        extraction = extract_tunnelling_period(np.cos(2 * np.pi * n / 500))
        self.assertAlmostEqual(extraction.period, 500.0, delta=1e-6)

    def test_trapped(self):
        n = np.arange(400)
        extraction = extract_tunnelling_period(0.6 + 0.3 * np.cos(2 * np.pi * n / 80))
        self.assertEqual(extraction.classification, TRAPPED)
        self.assertIsNone(extraction.period)
        self.assertAlmostEqual(extraction.floor, 1.0 / 3.0)
        self.assertEqual(tunnelling_rate(extraction), 0.0)

    def test_marginal(self):
        n = np.arange(400)
        extraction = extract_tunnelling_period(0.5 + 0.49 * np.cos(2 * np.pi * n / 80))
        self.assertEqual(extraction.classification, MARGINAL)
        self.assertIsNone(tunnelling_rate(extraction))

    def test_too_short(self):
        with self.assertRaises(SeriesTooShort):
            extract_tunnelling_period([1.0, 0.5, -0.5])

    def test_crossings_interpolated(self):
        np.testing.assert_allclose(zero_crossings([1.0, -1.0, -1.0, 3.0]), [0.5, 2.25])
        np.testing.assert_allclose(zero_crossings([1.0, 0.0, -1.0]), [1.0])


class TestBisectOnset(unittest.TestCase):

    def test_brackets_threshold(self):
        calls = []

        def trapped(u):
            calls.append(u)
            return u >= 0.0137

        scan = [0.004, 0.008, 0.012, 0.016, 0.02]
        estimate, (lo, hi) = bisect_onset(trapped, scan, 0.05)
        self.assertLessEqual(lo, 0.0137)
        self.assertGreaterEqual(hi, 0.0137)
        self.assertLessEqual(hi - lo, 0.05 * hi)
        self.assertAlmostEqual(estimate, 0.0137, delta=0.05 * 0.0137)
        self.assertEqual(calls[:4], scan[:4])

    def test_never_trapped(self):
        self.assertEqual(bisect_onset(lambda u: False, [0.01, 0.02], 0.05), (None, None))

    def test_trapped_at_first_point(self):
        _, (lo, hi) = bisect_onset(lambda u: u > 0.001, [0.01, 0.02], 0.05)
        self.assertLess(lo, 0.001 * 1.1)
        self.assertGreater(hi, 0.001)


class TestClassifyTwoMode(unittest.TestCase):

    def test_row(self):
        row = classify_twomode(CouplingCoefficients.from_effective(3.0, 1.0, 0.0))
        self.assertTrue(row['trapped'])
        self.assertEqual(row['verdict'], 'trapped')
        self.assertAlmostEqual(row['ratio'], 1.5)
        self.assertIsNone(row['witness_phi'])


class TestSweep(unittest.TestCase):

    def test_degenerate_doublet_reports_zero(self):
        config = load_config(overrides=dict(REQUIRED, sweep_values='0.2,0.3'))
        island = mock.Mock(x_star=1.0, p_star=0.8)
        pipeline = mock.Mock(islands=(island, island))
        pipeline.linear_doublet.return_value = (mock.Mock(delta_lambda=0.0, t_lin_periods=float('inf')), None)
        degenerate = CouplingCoefficients.from_effective(0.5, 0.0, 0.0)
        with mock.patch('dyntunnel.analysis.experiments.Pipeline', return_value=pipeline), \
                mock.patch('dyntunnel.analysis.experiments.compute_couplings', return_value=degenerate):
            result = sweep(config)
        self.assertEqual(result.errors, [])
        self.assertEqual(len(result.warnings), 2)
        self.assertEqual([row['epsilon'] for row in result.rows], [0.2, 0.3])
        self.assertEqual([row['u_crit_linear'] for row in result.rows], [0.0, 0.0])
        self.assertEqual([row['degenerate'] for row in result.rows], [True, True])


class TestConfig(unittest.TestCase):

    def setUp(self):
        self.dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.dir.cleanup()

    def _write(self, text: str) -> str:
        path = os.path.join(self.dir.name, 'run.cfg')
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_missing_required(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={'epsilon': '0.2', 'hbar_eff': '0.5'})
        self.assertEqual(ctx.exception.key, 'kappa')
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_defaults(self):
        config = load_config(overrides=REQUIRED)
        self.assertEqual(config['n_points'], 2048)
        self.assertEqual(config.grid().x_max, 40.0)
        self.assertEqual(config['u_list'], [0.012, 0.023, 0.034])
        self.assertEqual(config.system_params().kappa, 1.3)
        self.assertIsNone(config.continuation_step())

    def test_precedence(self):
        path = self._write('[system]\nkappa = 2.3\nepsilon = 0.3\nhbar_eff = 0.5\nu_nl = 0.01\n'
                           '[experiments]\nu_list = 0.1, 0.2\n')
        config = load_config(path, {'u_nl': '0.02', 'kappa': None})
        self.assertEqual(config['kappa'], 2.3)
        self.assertEqual(config['u_nl'], 0.02)
        self.assertEqual(config['u_list'], [0.1, 0.2])

    def test_unknown_key_and_section(self):
        with self.assertRaises(ConfigError):
            load_config(self._write('[system]\nkappa = 1\nepsilon = 0\nhbar_eff = 1\nomega = 2\n'))
        with self.assertRaises(ConfigError):
            load_config(self._write('[grid]\nkappa = 1\n'))
        with self.assertRaises(ConfigError):
            load_config(self._write('[lattice]\nfoo = 1\n'))
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.dir.name, 'missing.cfg'))

    def test_constraints(self):
        for key, val in (('kappa', '-1'), ('n_points', '1000'), ('splitting_order', '3'), ('n_phases', '3'),
                         ('basis_size', '4096'), ('twomode_mode', 'instant'), ('epsilon', 'abc')):
            with self.assertRaises(ConfigError, msg=key):
                load_config(overrides=dict(REQUIRED, **{key: val}))

    def test_manifest_round_trip(self):
        config = load_config(overrides=dict(REQUIRED, u_nl='0.023', u_grid='0.0,0.01'))
        path = os.path.join(self.dir.name, 'manifest.cfg')
        config.write(path, manifest={'command': 'fig2', 'seed': 3})
        self.assertEqual(read_config_file(path)['u_nl'], '0.023')
        again = load_config(path)
        for p in all_params:
            self.assertEqual(again[p.key], config[p.key], p.key)

    def test_settings_builders(self):
        config = load_config(overrides=dict(REQUIRED, basis_size='64', strobe_phase='0.5'))
        settings = config.floquet_settings()
        self.assertEqual(settings.basis_size, 64)
        self.assertEqual(settings.strobe_phase, 0.5)
        self.assertEqual(config.lattice().x_range, (-8.0, 8.0))
        self.assertEqual(config.newton_settings().n_seeds, 32)
        self.assertEqual(config.grid().n_points, 2048)


class TestResults(unittest.TestCase):

    def test_run_record_frames(self):
        records = [StroboscopicRecord(n, np.array([0.25, 0.5, 0.25]), 0.1 * n) for n in range(3)]
        d = np.array([[1.0, 0.0], [0.6, 0.8j], [0.0, 1.0]])
        run = RunRecord(SystemParams(1.3, 0.2, 0.5, 0.01), records, d_series=d, label='U0.01')
        frame = run.populations_frame()
        self.assertEqual(list(frame.columns), ['period', 'mean_p', 'n_plus', 'n_minus', 'n_tot', 'z'])
        np.testing.assert_allclose(frame['z'], [1.0, 0.36 - 0.64, -1.0])
        np.testing.assert_allclose(frame['n_tot'], 1.0)

        heat = run.momentum_frame(np.array([0.0, 1.0, -1.0]))
        self.assertEqual(list(heat.columns), [-1.0, 0.0, 1.0])
        self.assertEqual(heat.shape, (3, 3))
        self.assertEqual(run.summary()['n_periods'], 2)

    def test_issue_log(self):
        log = IssueLog()
        self.assertFalse(log.has_issues())
        table = TableResult('sweep')
        table.add_row({'epsilon': 0.1, 'u_crit_linear': None})
        table.add_error('epsilon=0.1: DoubletNotFound')
        log.merge(table)
        self.assertTrue(log.has_issues())
        self.assertEqual(len(table.to_frame()), 1)
        self.assertIn('DoubletNotFound', table.to_json())


if __name__ == '__main__':
    unittest.main()
