import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from dyntunnel.analysis.analyze import PeriodExtraction
from dyntunnel.quantum.propagator import StroboscopicRecord
from dyntunnel.system import SystemParams


class IssueLog:
    """
    Errors and warnings collected while running many points; one failing point never stops the others
    """

    # Failed points, with the numerical error text
    errors: [str]

    # Points that finished but deserve a second look
    warnings: [str]

    def __init__(self):
        self.errors = []
        self.warnings = []

    def add_error(self, e: str):
        self.errors.append(e)

    def add_warning(self, w: str):
        self.warnings.append(w)

    def has_issues(self):
        return len(self.errors) or len(self.warnings)

    def merge(self, other: 'IssueLog'):
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)


@dataclass(eq=False)
class RunRecord:
    params: SystemParams
    records: [StroboscopicRecord]
    d_series: np.ndarray = None         # (n, 2) complex overlaps with phi+ and phi-
    extraction: PeriodExtraction = None
    n_tot_floor: float = None
    label: str = ''
    twomode: object = None              # TwoModeTrajectory started from the same state
    errors: [str] = field(default_factory=list)
    warnings: [str] = field(default_factory=list)

    @property
    def classification(self) -> str:
        return self.extraction.classification if self.extraction else None

    @property
    def extracted_period(self) -> float:
        return self.extraction.period if self.extraction else None

    @property
    def periods(self) -> np.ndarray:
        return np.array([r.period_index for r in self.records])

    @property
    def mean_p(self) -> np.ndarray:
        return np.array([r.mean_p for r in self.records])

    @property
    def z(self) -> np.ndarray:
        populations = np.abs(self.d_series) ** 2
        return populations[:, 0] - populations[:, 1]

    def populations_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'period': self.periods, 'mean_p': self.mean_p})
        if self.d_series is not None:
            populations = np.abs(self.d_series) ** 2
            frame['n_plus'] = populations[:, 0]
            frame['n_minus'] = populations[:, 1]
            frame['n_tot'] = populations.sum(axis=1)
            frame['z'] = self.z
        return frame

    def momentum_frame(self, p: np.ndarray) -> pd.DataFrame:
        """
        Heat-map data: one row per period, one column per momentum in increasing order
        """
        order = np.argsort(p)
        densities = np.array([r.momentum_density[order] for r in self.records])
        frame = pd.DataFrame(densities, index=self.periods, columns=p[order])
        frame.index.name = 'period\\p'
        return frame

    def summary(self) -> dict:
        return {
            'label': self.label,
            'kappa': self.params.kappa,
            'epsilon': self.params.epsilon,
            'hbar_eff': self.params.hbar_eff,
            'u_nl': self.params.u_nl,
            'classification': self.classification,
            'extracted_period': self.extracted_period,
            'n_tot_floor': self.n_tot_floor,
            'n_periods': len(self.records) - 1,
            'errors': self.errors,
            'warnings': self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=4, default=lambda o: o.__dict__)


class TableResult(IssueLog):
    """
    Rows of a sweep or scan, in input order, with the issues of every point
    """

    # Output file stem
    name: str

    # One dict per point; failed values are None
    rows: [dict]

    def __init__(self, name: str, rows: [dict] = None):
        super().__init__()
        self.name = name
        self.rows = rows or []

    def add_row(self, row: dict):
        self.rows.append(row)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_json(self) -> str:
        return json.dumps({'name': self.name, 'rows': self.rows, 'errors': self.errors, 'warnings': self.warnings},
                          indent=4, default=lambda o: o.__dict__)
