"""
Split-step Fourier propagation of the driven Gross-Pitaevskii equation

    i hbar d/dt psi = [p^2 / 2 + V(x, t) + U |psi|^2] psi,    p = -i hbar d/dx

Each Strang step is: half step of the diagonal potential + nonlinear phase at the step midpoint time,
a full kinetic step in momentum space, and a second half step with the updated density.  Order 4 is the
triple-jump composition of Strang steps.  States may be single vectors (n_points,) or batches of
columns (n_points, m); columns evolve independently.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from dyntunnel.errors import BoundaryLeak, NumericalError, PhaseMismatch
from dyntunnel.system import DRIVE_PERIOD, SpatialGrid, SystemParams, WaveFunction, momentum_density
from dyntunnel.utils import check_finite, progress_enabled

logger = logging.getLogger(__name__)

_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1

NORM_TOL = 1e-8


@dataclass(frozen=True)
class PropagatorConfig:
    steps_per_period: int = 2048
    splitting_order: int = 2
    boundary_points: int = 5
    boundary_tol: float = 1e-10

    def __post_init__(self):
        if self.steps_per_period < 1:
            raise ValueError(f'steps_per_period must be >= 1, got {self.steps_per_period}')
        if self.splitting_order not in (2, 4):
            raise ValueError(f'splitting_order must be 2 or 4, got {self.splitting_order}')

    @property
    def dt(self) -> float:
        return DRIVE_PERIOD / self.steps_per_period


@dataclass(frozen=True, eq=False)
class StroboscopicRecord:
    period_index: int
    momentum_density: np.ndarray
    mean_p: float
    snapshot: WaveFunction = None


class SplitStepPropagator:

    def __init__(self, params: SystemParams, grid: SpatialGrid, dt: float, splitting_order: int = 2):
        self.params = params
        self.grid = grid
        self.dt = dt
        self.order = splitting_order
        self.hbar = params.hbar_eff
        self.u_nl = params.u_nl
        self.shape = np.sqrt(1.0 + np.square(grid.x))
        if splitting_order == 2:
            self.substeps = ((0.0, 1.0),)
        else:
            self.substeps = ((0.0, _W1), (_W1, _W0), (_W1 + _W0, _W1))
        self.kinetic = {w: np.exp(-0.5j * self.hbar * np.square(grid.k) * w * dt) for _, w in self.substeps}

    def _half_phase(self, psi, t_mid, h):
        v = self.params.drive_factor(t_mid) * self.shape
        if psi.ndim == 2:
            v = v[:, None]
        if self.u_nl:
            v = v + self.u_nl * (psi.real ** 2 + psi.imag ** 2)
        return np.exp((-0.5j * h / self.hbar) * v)

    def _strang(self, psi, t, w):
        h = w * self.dt
        t_mid = t + 0.5 * h
        psi = psi * self._half_phase(psi, t_mid, h)
        kinetic = self.kinetic[w] if psi.ndim == 1 else self.kinetic[w][:, None]
        psi = np.fft.ifft(np.fft.fft(psi, axis=0) * kinetic, axis=0)
        return psi * self._half_phase(psi, t_mid, h)

    def step(self, psi: np.ndarray, t: float) -> np.ndarray:
        for offset, w in self.substeps:
            psi = self._strang(psi, t + offset * self.dt, w)
        return psi

    def advance(self, psi: np.ndarray, t0: float, n_steps: int) -> np.ndarray:
        for j in range(n_steps):
            psi = self.step(psi, t0 + j * self.dt)
        return psi


def propagator_for(params: SystemParams, grid: SpatialGrid, config: PropagatorConfig) -> SplitStepPropagator:
    return SplitStepPropagator(params, grid, config.dt, config.splitting_order)


def step(psi: WaveFunction, t: float, dt: float, params: SystemParams, splitting_order: int = 2) -> WaveFunction:
    """
    One split-step update of psi from t to t + dt
    :param psi: unit-norm state
    :param t: current time
    :param dt: time step
    :param params: system parameters (u_nl is the nonlinearity)
    :param splitting_order: 2 (Strang) or 4
    :return: the updated WaveFunction tagged with t + dt
    """
    prop = SplitStepPropagator(params, psi.grid, dt, splitting_order)
    out = check_finite(prop.step(np.asarray(psi.amplitudes), t), 'propagated state')
    return psi.with_amplitudes(out, t + dt)


def propagate_period(states: np.ndarray, params: SystemParams, grid: SpatialGrid, config: PropagatorConfig,
                     t0: float = 0.0, n_phases: int = 0):
    """
    Propagate one or many states (columns) through one drive period starting at t0
    :param states: array (n_points,) or (n_points, m)
    :param n_phases: when > 0, also return the states at t0 + k T / n_phases, k = 0..n_phases-1
    :return: final states, or (final states, snapshots of shape (n_phases,) + states.shape)
    """
    prop = propagator_for(params, grid, config)
    steps = config.steps_per_period
    psi = np.array(states, dtype=complex)
    if n_phases <= 0:
        return check_finite(prop.advance(psi, t0, steps), 'propagated states')

    if steps % n_phases:
        raise ValueError(f'n_phases={n_phases} must divide steps_per_period={steps}')
    stride = steps // n_phases
    snapshots = np.empty((n_phases,) + psi.shape, dtype=complex)
    for k in range(n_phases):
        snapshots[k] = psi
        psi = prop.advance(psi, t0 + k * stride * config.dt, stride)
    return check_finite(psi, 'propagated states'), snapshots


def check_boundary(amplitudes: np.ndarray, config: PropagatorConfig, period_index: int):
    n = config.boundary_points
    edge = np.concatenate([amplitudes[:n], amplitudes[-n:]])
    peak = float(np.max(np.abs(edge) ** 2))
    if peak >= config.boundary_tol:
        raise BoundaryLeak(f'density {peak:.3g} within {n} points of the box edge at period {period_index}')


def _record(n: int, amplitudes: np.ndarray, grid: SpatialGrid, params: SystemParams, snapshot: WaveFunction):
    density = momentum_density(amplitudes)
    mean_p = float(np.sum(grid.p(params.hbar_eff) * density))
    return StroboscopicRecord(n, density, mean_p, snapshot)


def evolve_stroboscopic(psi0: WaveFunction, n_periods: int, params: SystemParams, config: PropagatorConfig,
                        store_every: int = 0, callback=None) -> [StroboscopicRecord]:
    """
    Evolve psi0 for n_periods drive periods and sample once per period
    :param psi0: unit-norm initial state; its time_tag must be a whole number of periods
    :param n_periods: number of periods to evolve
    :param params: system parameters
    :param config: propagator configuration
    :param store_every: keep the full WaveFunction on every store_every-th record (0: only the last)
    :param callback: optional function called with each record and the WaveFunction it was taken from
    :return: records for period indices n0 .. n0 + n_periods
    :raises NumericalError: on a non-finite state or a boundary leak, with the records so far as partial
    """
    if n_periods < 1:
        raise ValueError(f'n_periods must be >= 1, got {n_periods}')
    if abs(psi0.norm() - 1.0) > NORM_TOL:
        raise ValueError(f'initial state must have unit norm, got {psi0.norm()}')
    n0 = int(round(psi0.time_tag / DRIVE_PERIOD))
    if abs(psi0.time_tag - n0 * DRIVE_PERIOD) > 1e-9 * max(1.0, abs(psi0.time_tag)):
        raise PhaseMismatch(f'initial time {psi0.time_tag} is not a stroboscopic time')

    grid = psi0.grid
    prop = propagator_for(params, grid, config)
    psi = np.array(psi0.amplitudes)

    def snapshot_for(n, amps):
        if (store_every and n % store_every == 0) or n == n0 + n_periods:
            return WaveFunction(grid, amps, n * DRIVE_PERIOD)
        return None

    records = [_record(n0, psi, grid, params, snapshot_for(n0, psi))]
    if callback:
        callback(records[-1], WaveFunction(grid, psi, n0 * DRIVE_PERIOD))
    for n in tqdm(range(n0 + 1, n0 + n_periods + 1), desc='periods', disable=not progress_enabled(), leave=False):
        last = psi
        psi = prop.advance(psi, (n - 1) * DRIVE_PERIOD, config.steps_per_period)
        try:
            check_finite(psi, f'state at period {n}')
            check_boundary(psi, config, n)
        except NumericalError as e:
            # keep the last good state for a restart
            good = records[-1]
            if good.snapshot is None:
                records[-1] = StroboscopicRecord(good.period_index, good.momentum_density, good.mean_p,
                                                 WaveFunction(grid, last, good.period_index * DRIVE_PERIOD))
            e.partial = records
            logger.warning(f'stopped after period {n - 1}: {e}')
            raise
        records.append(_record(n, psi, grid, params, snapshot_for(n, psi)))
        if callback:
            callback(records[-1], WaveFunction(grid, psi, n * DRIVE_PERIOD))
    logger.debug(f'evolved {n_periods} periods, final norm {grid.integrate(np.abs(psi) ** 2):.12f}')
    return records


def final_state(records: [StroboscopicRecord]) -> WaveFunction:
    for r in reversed(records):
        if r.snapshot is not None:
            return r.snapshot
    return None


def same_phase(t1: float, t2: float, tol: float = 1e-9) -> bool:
    d = math.remainder(t1 - t2, DRIVE_PERIOD)
    return abs(d) < tol


def project_populations(psi: WaveFunction, phi_plus: WaveFunction, phi_minus: WaveFunction):
    """
    Overlaps d+- = <phi+-|psi> with the island modes at the same drive phase
    :return: (d_plus, d_minus, n_tot)
    """
    psi.grid.check_same(phi_plus.grid)
    psi.grid.check_same(phi_minus.grid)
    if not (same_phase(psi.time_tag, phi_plus.time_tag) and same_phase(psi.time_tag, phi_minus.time_tag)):
        raise PhaseMismatch(f'state at t={psi.time_tag} projected on modes at '
                            f't={phi_plus.time_tag}, {phi_minus.time_tag}')
    d_plus = phi_plus.inner(psi)
    d_minus = phi_minus.inner(psi)
    return d_plus, d_minus, abs(d_plus) ** 2 + abs(d_minus) ** 2
