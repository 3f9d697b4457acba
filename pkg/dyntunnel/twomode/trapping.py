"""
Self-trapping decisions of the effective two-mode Hamiltonian and the critical nonlinearity estimate.

Starting from z(0) = 1, z can only reach 0 if Lambda / 2 = alpha cos(phi) + beta cos(2 phi) has a
solution.  With c = cos(phi) the right hand side is the parabola f(c) = alpha c + beta (2 c^2 - 1) on
[-1, 1], so the decision is an interval test.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from dyntunnel.errors import DegenerateDoublet
from dyntunnel.quantum.floquet import FloquetState
from dyntunnel.twomode.couplings import CouplingCoefficients, EffectiveHamiltonianParams, compute_couplings, \
    effective_params

logger = logging.getLogger(__name__)

TUNNELLING = 'tunnelling'
TRAPPED = 'trapped'
MARGINAL = 'marginal'

MARGINAL_BAND = (0.9, 1.1)
DEGENERATE_SPLITTING = 1e-14


@dataclass(frozen=True)
class TrappingDecision:
    trapped: bool
    witness: float          # a phase solving the crossing condition, None when trapped
    f_min: float
    f_max: float
    ratio: float            # |Lambda / 2 alpha|

    @property
    def verdict(self) -> str:
        if MARGINAL_BAND[0] <= self.ratio <= MARGINAL_BAND[1]:
            return MARGINAL
        return TRAPPED if self.trapped else TUNNELLING

    def __bool__(self):
        return self.trapped


def crossing_range(alpha: float, beta: float) -> (float, float):
    """
    Range of alpha cos(phi) + beta cos(2 phi) over all phases
    """
    values = [alpha + beta, -alpha + beta]
    if beta != 0:
        c_star = -alpha / (4.0 * beta)
        if abs(c_star) <= 1.0:
            values.append(-alpha ** 2 / (8.0 * beta) - beta)
    return min(values), max(values)


def _witness(alpha: float, beta: float, target: float) -> float:
    """
    cos(phi) in [-1, 1] with alpha c + beta (2 c^2 - 1) = target, as the phase phi = arccos(c)
    """
    if abs(beta) <= 1e-15 * max(abs(alpha), 1.0):
        c = target / alpha if alpha else 0.0
        return math.acos(min(1.0, max(-1.0, c)))
    roots = np.roots([2.0 * beta, alpha, -(beta + target)])
    real = roots[np.abs(roots.imag) <= 1e-9 * max(1.0, np.max(np.abs(roots)))].real
    inside = [c for c in real if -1.0 - 1e-9 <= c <= 1.0 + 1e-9]
    c = min(inside, key=abs) if inside else real[np.argmin(np.abs(np.abs(real) - 1.0))]
    return math.acos(min(1.0, max(-1.0, float(c))))


def is_self_trapped(params: EffectiveHamiltonianParams) -> TrappingDecision:
    """
    Decide self-trapping from z(0) = 1 in closed form
    :param params: effective Hamiltonian parameters
    :return: TrappingDecision; truthy when trapped, with a witness phase otherwise
    """
    target = params.lambda_cap / 2.0
    f_min, f_max = crossing_range(params.alpha, params.beta)
    trapped = target < f_min or target > f_max
    witness = None if trapped else _witness(params.alpha, params.beta, target)
    return TrappingDecision(trapped, witness, f_min, f_max, params.ratio)


def u_crit_estimate(u_e: FloquetState, u_o: FloquetState, n_time_samples: int = None) -> float:
    """
    U_crit = 2 |Delta E| / |Lambda_0| from the overlaps of the linear doublet at unit nonlinearity
    :param u_e: even linear Floquet state
    :param u_o: odd linear Floquet state, eigenvalue expressed next to the even one
    :param n_time_samples: phases used for the period averages
    :return: the critical nonlinearity
    """
    coeffs = compute_couplings(u_e, u_o, 1.0, n_time_samples)
    return u_crit_from_couplings(coeffs)


def u_crit_from_couplings(coeffs: CouplingCoefficients) -> float:
    delta_e = abs(coeffs.delta_e)
    if delta_e < DEGENERATE_SPLITTING:
        raise DegenerateDoublet(f'|Delta E| = {delta_e:.3g}: the doublet is degenerate, U_crit -> 0')
    lambda0 = abs(effective_params(coeffs).lambda0)
    estimate = 2.0 * delta_e / lambda0 if lambda0 else float('inf')
    logger.debug(f'U_crit estimate {estimate:.6g} from |Delta E| = {delta_e:.6g}, |Lambda_0| = {lambda0:.6g}')
    return estimate


def linear_u_crit(coeffs: CouplingCoefficients) -> (float, bool):
    """
    U_crit for result rows: a degenerate doublet traps at any U, so it is reported as 0 with the flag set
    :return: (estimate, degenerate)
    """
    try:
        return u_crit_from_couplings(coeffs), False
    except DegenerateDoublet as e:
        logger.warning(f'{e}; reporting U_crit = 0')
        return 0.0, True


def reappearance_check(coeffs: CouplingCoefficients) -> bool:
    """
    The small-beta trapping condition |Lambda / 2 alpha| > 1 with the full alpha = (u_ee - u_oo) / 2 - Delta E
    :param coeffs: couplings of the nonlinear states at the target U
    :return: True if trapped
    """
    return effective_params(coeffs).ratio > 1.0
