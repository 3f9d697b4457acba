"""
Branch store: one DTWF file per nonlinear Floquet solution plus a JSON-lines index (U, E, residual, parity).
"""
import logging
import os

import pandas as pd

from dyntunnel.quantum.nonlinear import NonlinearFloquetSolution
from dyntunnel.storage.snapshot import read_floquet_state, write_floquet_state
from dyntunnel.storage.tables import append_jsonl
from dyntunnel.system import SystemParams

logger = logging.getLogger(__name__)

INDEX_NAME = 'index.jsonl'
INDEX_COLUMNS = ['file', 'parity', 'u_nl', 'energy', 'residual', 'solution_id', 'continuation_parent', 'iterations']


class BranchStore:

    def __init__(self, directory: str):
        self.directory = directory
        self.index_path = os.path.join(directory, INDEX_NAME)
        os.makedirs(directory, exist_ok=True)

    def file_name(self, solution: NonlinearFloquetSolution) -> str:
        return f'{solution.parity}_U{solution.u_nl:.8f}.dtwf'

    def save(self, solution: NonlinearFloquetSolution, params: SystemParams) -> str:
        name = self.file_name(solution)
        write_floquet_state(os.path.join(self.directory, name), solution.state, params.replace(u_nl=solution.u_nl))
        row = pd.DataFrame([{
            'file': name,
            'parity': solution.parity,
            'u_nl': solution.u_nl,
            'energy': solution.energy,
            'residual': solution.residual,
            'solution_id': solution.solution_id,
            'continuation_parent': solution.continuation_parent,
            'iterations': solution.iterations,
        }], columns=INDEX_COLUMNS)
        append_jsonl(row, self.index_path)
        logger.debug(f'stored {name}')
        return name

    def save_branch(self, branch: [NonlinearFloquetSolution], params: SystemParams):
        for solution in branch:
            self.save(solution, params)

    def index(self) -> pd.DataFrame:
        if not os.path.exists(self.index_path):
            return pd.DataFrame(columns=INDEX_COLUMNS)
        frame = pd.read_json(self.index_path, orient='records', lines=True)
        # a re-solved point replaces the earlier entry
        return frame.drop_duplicates(subset='file', keep='last').sort_values(['parity', 'u_nl'])

    def load(self, row) -> NonlinearFloquetSolution:
        state, _ = read_floquet_state(os.path.join(self.directory, row['file']), row['parity'])
        parent = row['continuation_parent']
        return NonlinearFloquetSolution(state, float(row['u_nl']), float(row['residual']),
                                        None if pd.isna(parent) else int(parent), int(row['solution_id']),
                                        int(row['iterations']))

    def nearest_below(self, parity: str, u_nl: float, tol: float = 1e-12) -> NonlinearFloquetSolution:
        """
        The stored solution of a parity with the largest U not above u_nl, or None
        """
        frame = self.index()
        frame = frame[(frame['parity'] == parity) & (frame['u_nl'] <= u_nl + tol)]
        if frame.empty:
            return None
        return self.load(frame.iloc[-1])
