from openpyxl import Workbook, load_workbook
from openpyxl.styles import Font
from openpyxl.utils import get_column_letter
import pandas as pd
import os

from dyntunnel.analysis.parameters import Config, SECTIONS, all_params
from dyntunnel.analysis.result import TableResult
from dyntunnel.utils import log


def _write_frame(sheet, frame: pd.DataFrame):
    bold = Font(bold=True)
    for col, name in enumerate(frame.columns, start=1):
        cell = sheet.cell(row=1, column=col, value=str(name))
        cell.font = bold
        sheet.column_dimensions[get_column_letter(col)].width = max(12, len(str(name)) + 2)
    for row, values in enumerate(frame.itertuples(index=False), start=2):
        for col, val in enumerate(values, start=1):
            # openpyxl cannot store NaN or numpy scalars
            if val is None or (isinstance(val, float) and val != val):
                continue
            sheet.cell(row=row, column=col, value=val.item() if hasattr(val, 'item') else val)
    sheet.freeze_panes = 'A2'


def output_to_xls(result: TableResult, config: Config, directory: str) -> str:
    """
    Export a result table to <directory>/<name>.xlsx with three sheets: the rows, the parameters used,
    and the errors and warnings of the run
    :return: the path written
    """
    outfile = os.path.join(directory, f'{result.name}.xlsx')

    wb = Workbook()
    sheet = wb.active
    sheet.title = result.name
    _write_frame(sheet, result.to_frame())

    params = wb.create_sheet('parameters')
    rows = [(p.section, p.key, str(config[p.key]), p.description)
            for section in SECTIONS for p in all_params if p.section == section]
    _write_frame(params, pd.DataFrame(rows, columns=['section', 'key', 'value', 'description']))

    issues = wb.create_sheet('issues')
    rows = [('error', e) for e in result.errors] + [('warning', w) for w in result.warnings]
    _write_frame(issues, pd.DataFrame(rows, columns=['level', 'message']))

    os.makedirs(directory, exist_ok=True)
    wb.save(outfile)
    log(f'Wrote {outfile}')
    return outfile


def read_xls_table(path: str) -> pd.DataFrame:
    """
    The first sheet of a workbook written by output_to_xls, as a DataFrame
    """
    wb = load_workbook(filename=path, read_only=True)
    values = list(wb.worksheets[0].values)
    wb.close()
    return pd.DataFrame(values[1:], columns=values[0])
