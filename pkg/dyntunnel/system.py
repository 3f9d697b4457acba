"""
The driven single-well model shared by every other module: parameters, the periodic position grid,
the wavefunction container and the basic observables.

The potential is V(x, t) = kappa [1 + epsilon cos(t)] sqrt(1 + x^2), so the drive period is fixed to 2 pi.
"""
import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from dyntunnel.errors import GridMismatch, GridTooNarrow
from dyntunnel.utils import check_finite, is_power_of_two

DRIVE_PERIOD = 2.0 * math.pi

# Gaussian tail at the box edges relative to the peak, for coherent states
COHERENT_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class SystemParams:
    kappa: float
    epsilon: float
    hbar_eff: float
    u_nl: float = 0.0
    drive_period: float = DRIVE_PERIOD

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f'kappa must be > 0, got {self.kappa}')
        if not self.epsilon >= 0:
            raise ValueError(f'epsilon must be >= 0, got {self.epsilon}')
        if not self.hbar_eff > 0:
            raise ValueError(f'hbar_eff must be > 0, got {self.hbar_eff}')
        if not self.u_nl >= 0:
            raise ValueError(f'u_nl must be >= 0, got {self.u_nl}')
        if self.drive_period != DRIVE_PERIOD:
            raise ValueError('drive_period is fixed to 2 pi by the cos(t) drive')

    def replace(self, **changes) -> 'SystemParams':
        return dataclasses.replace(self, **changes)

    def drive_factor(self, t):
        return self.kappa * (1.0 + self.epsilon * np.cos(t))


@dataclass(frozen=True)
class SpatialGrid:
    """
    Periodic grid x_j = x_min + j dx, j = 0..n_points-1, symmetric about x = 0.  The conjugate momentum
    grid is p = hbar_eff k with k in numpy FFT order.
    """
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_max > 0:
            raise ValueError(f'x_max must be > 0, got {self.x_max}')
        if not is_power_of_two(self.n_points):
            raise ValueError(f'n_points must be a power of two, got {self.n_points}')

    @property
    def x_min(self) -> float:
        return -self.x_max

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        k.flags.writeable = False
        return k

    def p(self, hbar_eff: float) -> np.ndarray:
        return hbar_eff * self.k

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """
        Apply x -> -x along the first axis.  Index j maps to (n - j) mod n.
        """
        return np.roll(values[::-1], 1, axis=0)

    def integrate(self, values: np.ndarray):
        return np.sum(values, axis=0) * self.dx

    def check_same(self, other: 'SpatialGrid'):
        if self != other:
            raise GridMismatch(f'grids differ: {self} vs {other}')


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: SpatialGrid
    amplitudes: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex)
        if amplitudes.shape != (self.grid.n_points,):
            raise ValueError(f'expected {self.grid.n_points} amplitudes, got shape {amplitudes.shape}')
        amplitudes.flags.writeable = False
        object.__setattr__(self, 'amplitudes', amplitudes)

    def norm(self) -> float:
        return float(self.grid.integrate(np.abs(self.amplitudes) ** 2))

    def normalized(self) -> 'WaveFunction':
        return WaveFunction(self.grid, self.amplitudes / math.sqrt(self.norm()), self.time_tag)

    def inner(self, other: 'WaveFunction') -> complex:
        """
        <self|other> by grid quadrature
        """
        self.grid.check_same(other.grid)
        return complex(self.grid.integrate(np.conj(self.amplitudes) * other.amplitudes))

    def reflected(self) -> 'WaveFunction':
        return WaveFunction(self.grid, self.grid.reflect(self.amplitudes), self.time_tag)

    def momentum_amplitudes(self) -> np.ndarray:
        return np.fft.fft(self.amplitudes)

    def with_amplitudes(self, amplitudes: np.ndarray, time_tag: float = None) -> 'WaveFunction':
        return WaveFunction(self.grid, amplitudes, self.time_tag if time_tag is None else time_tag)


@dataclass(frozen=True, eq=False)
class Observables:
    norm: float
    mean_x: float
    mean_p: float
    momentum_density: np.ndarray


def potential(x, t, params: SystemParams):
    return params.drive_factor(t) * np.sqrt(1.0 + np.square(x))


def force(x, t, params: SystemParams):
    """
    -dV/dx, bounded by kappa (1 + epsilon)
    """
    return -params.drive_factor(t) * x / np.sqrt(1.0 + np.square(x))


def hamiltonian_energy(x, p, t, params: SystemParams):
    return 0.5 * np.square(p) + potential(x, t, params)


def momentum_density(amplitudes: np.ndarray) -> np.ndarray:
    """
    |FFT(psi)|^2 normalized to unit sum, in numpy FFT order (matching SpatialGrid.k)
    """
    density = np.abs(np.fft.fft(amplitudes, axis=0)) ** 2
    return density / np.sum(density, axis=0)


def observables(psi: WaveFunction, params: SystemParams) -> Observables:
    """
    Norm, <x>, <p> and the momentum density of psi.  <p> is the spectral expectation of -i hbar d/dx,
    evaluated through Parseval as the first moment of the momentum density.
    """
    amps = check_finite(psi.amplitudes, 'wavefunction')
    grid = psi.grid
    density_x = np.abs(amps) ** 2
    norm = float(grid.integrate(density_x))
    mean_x = float(grid.integrate(grid.x * density_x)) / norm
    density_p = momentum_density(amps)
    mean_p = float(np.sum(grid.p(params.hbar_eff) * density_p))
    return Observables(norm=norm, mean_x=mean_x, mean_p=mean_p, momentum_density=density_p)


def coherent_width(params: SystemParams) -> float:
    """
    sigma_x of the coherent states (unit mass, unit frequency oscillator ground state)
    """
    return math.sqrt(params.hbar_eff / 2.0)


def coherent_amplitudes(x0, p0, params: SystemParams, grid: SpatialGrid) -> np.ndarray:
    hbar = params.hbar_eff
    x = grid.x
    amps = (np.pi * hbar) ** -0.25 * np.exp(-np.square(x - x0) / (2.0 * hbar) + 1j * p0 * x / hbar)
    return amps / math.sqrt(grid.integrate(np.abs(amps) ** 2))


def coherent_state(x0: float, p0: float, params: SystemParams, grid: SpatialGrid) -> WaveFunction:
    """
    Minimum-uncertainty Gaussian centered on (x0, p0), with sigma_x = sqrt(hbar_eff / 2)
    :param x0: position of the center
    :param p0: momentum of the center
    :param params: system parameters (only hbar_eff is used)
    :param grid: the grid to sample on
    :return: unit-norm WaveFunction
    """
    margin = min(x0 - grid.x_min, grid.x_max - x0)
    if margin <= 0 or margin ** 2 / (2.0 * params.hbar_eff) < -math.log(COHERENT_TAIL_TOL):
        raise GridTooNarrow(f'coherent state at x0={x0} does not fit in [{grid.x_min}, {grid.x_max}]')
    return WaveFunction(grid, coherent_amplitudes(x0, p0, params, grid))
