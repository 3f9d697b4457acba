"""
Imaginary-time relaxation to the lowest stationary state of the time-averaged GPE,
H0 = p^2 / 2 + kappa sqrt(1 + x^2) + U |psi|^2.
"""
import logging
import math

import numpy as np

from dyntunnel.errors import NoConvergence
from dyntunnel.system import SpatialGrid, SystemParams, WaveFunction
from dyntunnel.utils import check_finite

logger = logging.getLogger(__name__)

DTAU_SCHEDULE = (0.02, 0.005, 0.001)


def apply_static_hamiltonian(psi: np.ndarray, params: SystemParams, grid: SpatialGrid, u_nl: float = None):
    """
    H0 psi with the spectral kinetic term and the epsilon-averaged potential
    """
    u_nl = params.u_nl if u_nl is None else u_nl
    hbar = params.hbar_eff
    kinetic = np.fft.ifft(0.5 * (hbar * grid.k) ** 2 * np.fft.fft(psi))
    return kinetic + (params.kappa * np.sqrt(1.0 + grid.x ** 2) + u_nl * np.abs(psi) ** 2) * psi


def chemical_potential(psi: np.ndarray, params: SystemParams, grid: SpatialGrid, u_nl: float = None) -> float:
    h_psi = apply_static_hamiltonian(psi, params, grid, u_nl)
    return float(np.real(grid.integrate(np.conj(psi) * h_psi)) / grid.integrate(np.abs(psi) ** 2))


def imaginary_time_ground_state(params: SystemParams, grid: SpatialGrid, u_nl: float = None,
                                initial: WaveFunction = None, tol: float = 1e-12,
                                max_steps: int = 200000, dtau_schedule=DTAU_SCHEDULE) -> (WaveFunction, float):
    """
    Relax to the ground state of H0 by normalized imaginary-time split-step evolution
    :param params: system parameters (epsilon is ignored)
    :param grid: spatial grid
    :param u_nl: nonlinearity, defaults to params.u_nl
    :param initial: starting state, defaults to a Gaussian at the origin
    :param tol: convergence threshold on the change of the chemical potential between checks
    :param max_steps: step budget per stage of the dtau schedule
    :param dtau_schedule: decreasing imaginary time steps; the last sets the splitting bias
    :return: (state, chemical potential)
    """
    u_nl = params.u_nl if u_nl is None else u_nl
    hbar = params.hbar_eff
    shape = params.kappa * np.sqrt(1.0 + grid.x ** 2)
    if initial is None:
        psi = np.exp(-grid.x ** 2 / (2 * hbar)).astype(complex)
    else:
        psi = np.array(initial.amplitudes)
    psi /= math.sqrt(grid.integrate(np.abs(psi) ** 2))

    mu = chemical_potential(psi, params, grid, u_nl)
    check_every = 100
    for dtau in dtau_schedule:
        kinetic = np.exp(-0.5 * hbar * grid.k ** 2 * dtau)
        converged = False
        for n in range(1, max_steps + 1):
            psi = psi * np.exp(-0.5 * dtau / hbar * (shape + u_nl * np.abs(psi) ** 2))
            psi = np.fft.ifft(np.fft.fft(psi) * kinetic)
            psi = psi * np.exp(-0.5 * dtau / hbar * (shape + u_nl * np.abs(psi) ** 2))
            psi /= math.sqrt(grid.integrate(np.abs(psi) ** 2))
            if n % check_every == 0:
                new_mu = chemical_potential(psi, params, grid, u_nl)
                if abs(new_mu - mu) < tol:
                    mu = new_mu
                    converged = True
                    break
                mu = new_mu
        if not converged:
            raise NoConvergence(f'imaginary-time relaxation did not converge at dtau={dtau}')
        logger.debug(f'relaxed at dtau={dtau}: mu={mu:.12f} after {n} steps')

    check_finite(psi, 'relaxed state')
    return WaveFunction(grid, psi), mu
