"""
DTWF wavefunction snapshots.

Little-endian layout of one record:
    magic "DTWF", version u16,
    x_min f64, x_max f64, n_points i64, time_tag f64,
    kappa f64, epsilon f64, hbar_eff f64, u_nl f64,
    [version 2 only] phase_index i64, n_phases i64, eigenvalue f64,
    n_points complex amplitudes as (re, im) f64 pairs.

A Floquet state is stored as one version-2 record per drive phase, concatenated in one file.
"""
from dataclasses import dataclass

import numpy as np

from dyntunnel.quantum.floquet import FloquetState
from dyntunnel.system import SpatialGrid, SystemParams, WaveFunction

MAGIC = b'DTWF'
PLAIN = 1
PHASED = 2

HEADER = np.dtype([
    ('magic', 'S4'), ('version', '<u2'),
    ('x_min', '<f8'), ('x_max', '<f8'), ('n_points', '<i8'), ('time_tag', '<f8'),
    ('kappa', '<f8'), ('epsilon', '<f8'), ('hbar_eff', '<f8'), ('u_nl', '<f8'),
])
PHASE_EXTENSION = np.dtype([('phase_index', '<i8'), ('n_phases', '<i8'), ('eigenvalue', '<f8')])
AMPLITUDE = np.dtype('<c16')


@dataclass(frozen=True, eq=False)
class Snapshot:
    psi: WaveFunction
    params: SystemParams
    phase_index: int = None
    n_phases: int = None
    eigenvalue: float = None


def encode(psi: WaveFunction, params: SystemParams, phase_index: int = None, n_phases: int = None,
           eigenvalue: float = None) -> bytes:
    grid = psi.grid
    phased = phase_index is not None
    header = np.zeros(1, dtype=HEADER)
    header[0] = (MAGIC, PHASED if phased else PLAIN, grid.x_min, grid.x_max, grid.n_points, psi.time_tag,
                 params.kappa, params.epsilon, params.hbar_eff, params.u_nl)
    parts = [header.tobytes()]
    if phased:
        ext = np.zeros(1, dtype=PHASE_EXTENSION)
        ext[0] = (phase_index, n_phases, eigenvalue if eigenvalue is not None else np.nan)
        parts.append(ext.tobytes())
    parts.append(np.asarray(psi.amplitudes, dtype=AMPLITUDE).tobytes())
    return b''.join(parts)


def decode(buffer: bytes, offset: int = 0) -> (Snapshot, int):
    """
    Parse one record starting at offset
    :return: (snapshot, offset just past the record)
    """
    if len(buffer) - offset < HEADER.itemsize:
        raise ValueError('truncated DTWF header')
    header = np.frombuffer(buffer, dtype=HEADER, count=1, offset=offset)[0]
    if header['magic'] != MAGIC:
        raise ValueError(f'not a DTWF snapshot (magic {header["magic"]!r})')
    version = int(header['version'])
    if version not in (PLAIN, PHASED):
        raise ValueError(f'unsupported DTWF version {version}')
    offset += HEADER.itemsize

    phase_index = n_phases = eigenvalue = None
    if version == PHASED:
        ext = np.frombuffer(buffer, dtype=PHASE_EXTENSION, count=1, offset=offset)[0]
        phase_index, n_phases = int(ext['phase_index']), int(ext['n_phases'])
        eigenvalue = None if np.isnan(ext['eigenvalue']) else float(ext['eigenvalue'])
        offset += PHASE_EXTENSION.itemsize

    n_points = int(header['n_points'])
    if len(buffer) - offset < n_points * AMPLITUDE.itemsize:
        raise ValueError('truncated DTWF amplitudes')
    amplitudes = np.frombuffer(buffer, dtype=AMPLITUDE, count=n_points, offset=offset).astype(complex)
    offset += n_points * AMPLITUDE.itemsize

    grid = SpatialGrid(float(header['x_max']), n_points)
    if abs(grid.x_min - float(header['x_min'])) > 1e-12 * grid.x_max:
        raise ValueError(f'grid is not symmetric: [{header["x_min"]}, {header["x_max"]}]')
    params = SystemParams(float(header['kappa']), float(header['epsilon']), float(header['hbar_eff']),
                          float(header['u_nl']))
    psi = WaveFunction(grid, amplitudes, float(header['time_tag']))
    return Snapshot(psi, params, phase_index, n_phases, eigenvalue), offset


def write_snapshot(path: str, psi: WaveFunction, params: SystemParams, **phase):
    with open(path, 'wb') as f:
        f.write(encode(psi, params, **phase))


def read_snapshots(path: str) -> [Snapshot]:
    with open(path, 'rb') as f:
        buffer = f.read()
    snapshots = []
    offset = 0
    while offset < len(buffer):
        snapshot, offset = decode(buffer, offset)
        snapshots.append(snapshot)
    return snapshots


def read_snapshot(path: str) -> Snapshot:
    return read_snapshots(path)[0]


def write_floquet_state(path: str, state: FloquetState, params: SystemParams):
    records = [encode(state.snapshot(k), params, phase_index=k, n_phases=state.n_phases, eigenvalue=state.eigenvalue)
               for k in range(state.n_phases)]
    with open(path, 'wb') as f:
        f.write(b''.join(records))


def read_floquet_state(path: str, parity: str, island_weight: float = float('nan')) -> (FloquetState, SystemParams):
    snapshots = read_snapshots(path)
    if not snapshots or any(s.phase_index is None for s in snapshots):
        raise ValueError(f'{path} holds records without a phase index')
    snapshots.sort(key=lambda s: s.phase_index)
    n_phases = snapshots[0].n_phases
    if [s.phase_index for s in snapshots] != list(range(n_phases)):
        raise ValueError(f'{path} does not hold all {n_phases} phases')
    first = snapshots[0]
    state = FloquetState(first.psi.grid, np.array([s.psi.amplitudes for s in snapshots]), first.eigenvalue,
                         parity, island_weight=island_weight, strobe_phase=first.psi.time_tag,
                         hbar_eff=first.params.hbar_eff)
    return state, first.params
