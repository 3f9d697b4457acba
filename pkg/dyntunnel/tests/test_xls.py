from openpyxl import load_workbook
import os
import tempfile
import unittest

import pandas as pd

from dyntunnel.analysis.parameters import all_params, load_config
from dyntunnel.analysis.result import TableResult
from dyntunnel.spreadsheet.xls import output_to_xls, read_xls_table


class TestXlsExport(unittest.TestCase):

    def setUp(self):
        self.dir = tempfile.TemporaryDirectory()
        self.config = load_config(overrides={'kappa': '2.3', 'epsilon': '0.3', 'hbar_eff': '0.5'})
        self.result = TableResult('sweep')
        self.result.add_row({'epsilon': 0.25, 'u_crit_linear': 0.0041, 'gpe_confirmed': True})
        self.result.add_row({'epsilon': 0.3, 'u_crit_linear': None, 'gpe_confirmed': None})
        self.result.add_error('epsilon=0.3: DoubletNotFound: no island pair')
        self.result.add_warning('epsilon=0.25: marginal verdict')

    def tearDown(self):
        self.dir.cleanup()

    def test_sheets(self):
        outfile = output_to_xls(self.result, self.config, self.dir.name)
        self.assertEqual(outfile, os.path.join(self.dir.name, 'sweep.xlsx'))

        wb = load_workbook(filename=outfile)
        self.assertEqual(wb.sheetnames, ['sweep', 'parameters', 'issues'])

        params = wb['parameters']
        self.assertEqual([c.value for c in params[1]], ['section', 'key', 'value', 'description'])
        self.assertEqual(params.max_row, len(all_params) + 1)
        values = {row[1]: row[2] for row in params.iter_rows(min_row=2, values_only=True)}
        self.assertEqual(values['kappa'], '2.3')

        issues = list(wb['issues'].iter_rows(min_row=2, values_only=True))
        self.assertEqual(issues, [('error', 'epsilon=0.3: DoubletNotFound: no island pair'),
                                  ('warning', 'epsilon=0.25: marginal verdict')])

    def test_table_reads_back(self):
        frame = read_xls_table(output_to_xls(self.result, self.config, self.dir.name))
        self.assertEqual(list(frame.columns), ['epsilon', 'u_crit_linear', 'gpe_confirmed'])
        self.assertEqual(list(frame['epsilon']), [0.25, 0.3])
        self.assertEqual(frame['u_crit_linear'][0], 0.0041)
        self.assertTrue(pd.isna(frame['u_crit_linear'][1]))
        self.assertTrue(frame['gpe_confirmed'][0])


if __name__ == '__main__':
    unittest.main()
