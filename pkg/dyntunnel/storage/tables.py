"""
Tabular outputs (CSV or JSON-lines) and run manifests
"""
import logging
import os

import pandas as pd

from dyntunnel import __version__
from dyntunnel.analysis.parameters import Config

logger = logging.getLogger(__name__)

CSV = 'csv'
JSONL = 'jsonl'
FORMATS = (CSV, JSONL)
MANIFEST_NAME = 'manifest.cfg'


def write_table(frame: pd.DataFrame, directory: str, name: str, fmt: str = CSV) -> str:
    """
    Write a flat table as <name>.csv or <name>.jsonl
    :return: the path written
    """
    if fmt not in FORMATS:
        raise ValueError(f'unknown table format {fmt}')
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f'{name}.{fmt}')
    if fmt == CSV:
        frame.to_csv(path, index=False, float_format='%.12g')
    else:
        frame.to_json(path, orient='records', lines=True, double_precision=15)
    logger.info(f'wrote {path} ({len(frame)} rows)')
    return path


def append_jsonl(frame: pd.DataFrame, path: str):
    text = frame.to_json(orient='records', lines=True, double_precision=15)
    if text and not text.endswith('\n'):
        text += '\n'
    with open(path, 'a') as f:
        f.write(text)


def write_matrix(frame: pd.DataFrame, directory: str, name: str, metadata: dict = None) -> str:
    """
    Write a labelled matrix (row and column headers hold the coordinates) as CSV, with an optional
    leading '# key=value' metadata line
    """
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f'{name}.csv')
    with open(path, 'w') as f:
        if metadata:
            f.write('# ' + ' '.join(f'{k}={v}' for k, v in metadata.items()) + '\n')
        frame.to_csv(f, float_format='%.12g')
    logger.info(f'wrote {path} ({frame.shape[0]}x{frame.shape[1]})')
    return path


def read_matrix(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path, comment='#', index_col=0)
    frame.columns = frame.columns.astype(float)
    return frame


def write_manifest(config: Config, directory: str, command: str, seed: int = None) -> str:
    """
    Write the resolved configuration plus a [manifest] section; the file is itself a valid --config input
    """
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, MANIFEST_NAME)
    config.write(path, {'version': __version__, 'command': command, 'seed': seed})
    return path
