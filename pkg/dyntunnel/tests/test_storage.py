import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from dyntunnel.quantum.floquet import EVEN, ODD, FloquetState
from dyntunnel.quantum.nonlinear import NonlinearFloquetSolution
from dyntunnel.storage.branches import BranchStore
from dyntunnel.storage.snapshot import HEADER, PHASE_EXTENSION, decode, encode, read_floquet_state, \
    read_snapshot, read_snapshots, write_floquet_state, write_snapshot
from dyntunnel.storage.tables import CSV, JSONL, read_matrix, write_matrix, write_table
from dyntunnel.system import SpatialGrid, SystemParams, WaveFunction

GRID = SpatialGrid(8.0, 32)
PARAMS = SystemParams(1.3, 0.2, 0.5, 0.02)


def random_amplitudes(rng, n_rows=None):
    shape = (GRID.n_points,) if n_rows is None else (n_rows, GRID.n_points)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def floquet_state(rng, eigenvalue, parity=EVEN):
    return FloquetState(GRID, random_amplitudes(rng, 4), eigenvalue, parity, strobe_phase=0.0, hbar_eff=0.5)


class TestSnapshot(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(2)
        self.dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.dir.cleanup()

    def test_plain_record(self):
        psi = WaveFunction(GRID, random_amplitudes(self.rng), 12.5)
        buffer = encode(psi, PARAMS)
        self.assertEqual(len(buffer), HEADER.itemsize + 16 * GRID.n_points)
        self.assertEqual(buffer[:4], b'DTWF')

        snapshot, offset = decode(buffer)
        self.assertEqual(offset, len(buffer))
        self.assertEqual(snapshot.psi.grid, GRID)
        self.assertEqual(snapshot.psi.time_tag, 12.5)
        self.assertEqual(snapshot.params, PARAMS)
        self.assertIsNone(snapshot.phase_index)
        np.testing.assert_array_equal(snapshot.psi.amplitudes, psi.amplitudes)

    def test_phased_record(self):
        psi = WaveFunction(GRID, random_amplitudes(self.rng))
        buffer = encode(psi, PARAMS, phase_index=3, n_phases=8, eigenvalue=-0.125)
        self.assertEqual(len(buffer), HEADER.itemsize + PHASE_EXTENSION.itemsize + 16 * GRID.n_points)
        snapshot, _ = decode(buffer)
        self.assertEqual((snapshot.phase_index, snapshot.n_phases, snapshot.eigenvalue), (3, 8, -0.125))

        no_eigenvalue, _ = decode(encode(psi, PARAMS, phase_index=0, n_phases=1))
        self.assertIsNone(no_eigenvalue.eigenvalue)

    def test_corrupt_buffers(self):
        buffer = encode(WaveFunction(GRID, random_amplitudes(self.rng)), PARAMS)
        with self.assertRaises(ValueError):
            decode(b'XXXX' + buffer[4:])
        with self.assertRaises(ValueError):
            decode(buffer[:-8])
        with self.assertRaises(ValueError):
            decode(buffer[:20])

    def test_files(self):
        path = os.path.join(self.dir.name, 'psi.dtwf')
        psi = WaveFunction(GRID, random_amplitudes(self.rng), 3.0)
        write_snapshot(path, psi, PARAMS)
        self.assertEqual(len(read_snapshots(path)), 1)
        np.testing.assert_array_equal(read_snapshot(path).psi.amplitudes, psi.amplitudes)

    def test_floquet_state(self):
        path = os.path.join(self.dir.name, 'even.dtwf')
        state = floquet_state(self.rng, 0.0375)
        write_floquet_state(path, state, PARAMS)
        self.assertEqual(len(read_snapshots(path)), 4)

        loaded, params = read_floquet_state(path, EVEN, island_weight=0.9)
        self.assertEqual(params, PARAMS)
        self.assertEqual(loaded.eigenvalue, 0.0375)
        self.assertEqual(loaded.island_weight, 0.9)
        self.assertEqual(loaded.hbar_eff, 0.5)
        np.testing.assert_array_equal(loaded.snapshots, state.snapshots)

        write_snapshot(path, state.snapshot(0), PARAMS)
        with self.assertRaises(ValueError):
            read_floquet_state(path, EVEN)


class TestBranchStore(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(4)
        self.dir = tempfile.TemporaryDirectory()
        self.store = BranchStore(os.path.join(self.dir.name, 'branches'))

    def tearDown(self):
        self.dir.cleanup()

    def test_nearest_below(self):
        first = NonlinearFloquetSolution(floquet_state(self.rng, 0.01), 0.01, 1e-10, None, 0, 5)
        second = NonlinearFloquetSolution(floquet_state(self.rng, 0.02), 0.02, 2e-10, 0, 1, 4)
        odd = NonlinearFloquetSolution(floquet_state(self.rng, 0.03, ODD), 0.015, 1e-10, None, 2, 6)
        self.store.save_branch([first, second], PARAMS)
        self.store.save(odd, PARAMS)

        self.assertEqual(len(self.store.index()), 3)
        self.assertIsNone(self.store.nearest_below(EVEN, 0.005))
        self.assertIsNone(self.store.nearest_below(ODD, 0.01))

        below = self.store.nearest_below(EVEN, 0.018)
        self.assertEqual(below.u_nl, 0.01)
        self.assertIsNone(below.continuation_parent)
        self.assertEqual(below.iterations, 5)
        np.testing.assert_array_equal(below.state.snapshots, first.state.snapshots)

        exact = self.store.nearest_below(EVEN, 0.02)
        self.assertEqual(exact.continuation_parent, 0)
        self.assertEqual(exact.energy, 0.02)
        self.assertEqual(self.store.nearest_below(ODD, 1.0).parity, ODD)

    def test_resolved_point_replaces_entry(self):
        solution = NonlinearFloquetSolution(floquet_state(self.rng, 0.01), 0.01, 1e-9, None, 0, 5)
        self.store.save(solution, PARAMS)
        self.store.save(NonlinearFloquetSolution(solution.state, 0.01, 1e-11, None, 7, 9), PARAMS)
        index = self.store.index()
        self.assertEqual(len(index), 1)
        self.assertEqual(int(index.iloc[0]['solution_id']), 7)


class TestTables(unittest.TestCase):

    def setUp(self):
        self.dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.dir.cleanup()

    def test_write_table(self):
        frame = pd.DataFrame({'u_nl': [0.0, 0.012], 'rate': [0.0012, None], 'verdict': ['tunnelling', 'trapped']})
        path = write_table(frame, self.dir.name, 'rates', CSV)
        self.assertTrue(path.endswith('rates.csv'))
        again = pd.read_csv(path)
        self.assertEqual(list(again.columns), ['u_nl', 'rate', 'verdict'])
        self.assertTrue(pd.isna(again['rate'][1]))

        path = write_table(frame, self.dir.name, 'rates', JSONL)
        self.assertEqual(list(pd.read_json(path, lines=True)['verdict']), ['tunnelling', 'trapped'])
        with self.assertRaises(ValueError):
            write_table(frame, self.dir.name, 'rates', 'parquet')

    def test_matrix(self):
        frame = pd.DataFrame(np.arange(6.0).reshape(2, 3), index=[0, 1], columns=[-0.5, 0.0, 0.5])
        frame.index.name = 'period\\p'
        path = write_matrix(frame, self.dir.name, 'momentum', {'u_nl': 0.023})
        with open(path) as f:
            self.assertEqual(f.readline().strip(), '# u_nl=0.023')
        again = read_matrix(path)
        self.assertEqual(list(again.columns), [-0.5, 0.0, 0.5])
        np.testing.assert_array_equal(again.to_numpy(), frame.to_numpy())


if __name__ == '__main__':
    unittest.main()
