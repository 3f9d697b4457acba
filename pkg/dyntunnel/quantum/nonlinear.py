"""
Nonlinear Floquet states: solutions of the GPE that come back to themselves after one drive period up to
a global phase exp(-i E T / hbar).

A branch is continued in U from a linear doublet member.  At each U the unknowns are the complex
coefficients of phi0 in the matching parity block of the static basis, plus E; the squared residual
||P_U(phi0) - exp(-i E T / hbar) phi0||^2 is driven to zero by Levenberg-Marquardt steps with a
finite-difference Jacobian (one batched propagation) refreshed every few steps and Broyden-updated
in between.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed

from dyntunnel.errors import ContinuationStuck, NumericalError
from dyntunnel.quantum.floquet import FloquetSettings, FloquetState, TunnellingDoublet, static_basis
from dyntunnel.quantum.propagator import NORM_TOL, PropagatorConfig, propagate_period
from dyntunnel.system import DRIVE_PERIOD, SpatialGrid, SystemParams, WaveFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NonlinearSettings:
    residual_tol: float = 1e-8
    max_iter: int = 60
    fd_step: float = 1e-7
    refresh_every: int = 4
    damping: float = 1e-6
    max_damping: float = 1e8
    backtracks: int = 4
    small_step: float = 0.005
    large_step: float = 0.05
    step_switch: float = 0.1
    bisections: int = 2


@dataclass(frozen=True, eq=False)
class NonlinearFloquetSolution:
    state: FloquetState
    u_nl: float
    residual: float
    continuation_parent: int = None
    solution_id: int = 0
    iterations: int = 0

    @property
    def energy(self) -> float:
        return self.state.eigenvalue

    @property
    def parity(self) -> str:
        return self.state.parity


def _phase_factor(energy: float, hbar: float) -> complex:
    return np.exp(-1j * energy * DRIVE_PERIOD / hbar)


def floquet_residual(phi0: WaveFunction, energy: float, u_nl: float, params: SystemParams,
                     config: PropagatorConfig = None) -> (float, np.ndarray):
    """
    Squared mismatch between phi0 propagated over one period with nonlinearity u_nl and phi0 itself
    rotated by exp(-i E T / hbar)
    :param phi0: unit-norm trial state at the strobe time (its time_tag is the start time)
    :param energy: trial nonlinear eigenvalue E
    :param u_nl: nonlinearity used for the propagation
    :param params: system parameters
    :param config: propagator configuration
    :return: (residual, residual field r(x)); a Gauss-Newton step solves J delta = -r
    """
    if abs(phi0.norm() - 1.0) > NORM_TOL:
        raise ValueError(f'trial state must have unit norm, got {phi0.norm()}')
    config = config or PropagatorConfig()
    grid = phi0.grid
    propagated = propagate_period(phi0.amplitudes, params.replace(u_nl=u_nl), grid, config, phi0.time_tag)
    field = propagated - _phase_factor(energy, params.hbar_eff) * phi0.amplitudes
    return float(grid.integrate(np.abs(field) ** 2)), field


def energy_derivative(phi0: np.ndarray, energy: float, hbar: float) -> np.ndarray:
    """
    d r / d E for the residual field r = P(phi0) - exp(-i E T / hbar) phi0
    """
    return 1j * DRIVE_PERIOD / hbar * _phase_factor(energy, hbar) * phi0


class _BranchProblem:
    """
    Residual and Jacobian of one parity block at fixed U, in real variables (Re c, Im c, E)
    """

    def __init__(self, vectors: np.ndarray, params: SystemParams, grid: SpatialGrid, config: PropagatorConfig,
                 t0: float, fd_step: float):
        self.vectors = vectors
        self.params = params
        self.grid = grid
        self.config = config
        self.t0 = t0
        self.fd_step = fd_step
        self.hbar = params.hbar_eff
        self.weight = math.sqrt(grid.dx)
        self.size = vectors.shape[1]

    def split(self, z: np.ndarray) -> (np.ndarray, float):
        m = self.size
        return z[:m] + 1j * z[m:2 * m], z[2 * m]

    @staticmethod
    def join(coeffs: np.ndarray, energy: float) -> np.ndarray:
        return np.concatenate([coeffs.real, coeffs.imag, [energy]])

    def project(self, z: np.ndarray) -> np.ndarray:
        coeffs, energy = self.split(z)
        return self.join(coeffs / np.linalg.norm(coeffs), energy)

    def state(self, z: np.ndarray) -> np.ndarray:
        coeffs, _ = self.split(z)
        return self.vectors @ coeffs

    def _real(self, field: np.ndarray) -> np.ndarray:
        return self.weight * np.concatenate([field.real, field.imag], axis=0)

    def residual(self, z: np.ndarray) -> (np.ndarray, np.ndarray):
        """
        :return: (real residual vector, propagated phi0)
        """
        phi0 = self.state(z)
        _, energy = self.split(z)
        propagated = propagate_period(phi0, self.params, self.grid, self.config, self.t0)
        return self._real(propagated - _phase_factor(energy, self.hbar) * phi0), propagated

    def jacobian(self, z: np.ndarray, propagated: np.ndarray) -> np.ndarray:
        phi0 = self.state(z)
        _, energy = self.split(z)
        h = self.fd_step
        directions = np.concatenate([self.vectors, 1j * self.vectors], axis=1)
        displaced = propagate_period(phi0[:, None] + h * directions, self.params, self.grid, self.config, self.t0)
        columns = (displaced - propagated[:, None]) / h - _phase_factor(energy, self.hbar) * directions
        columns = np.concatenate([columns, energy_derivative(phi0, energy, self.hbar)[:, None]], axis=1)
        return self._real(columns)


def _levenberg_marquardt(problem: _BranchProblem, z: np.ndarray, settings: NonlinearSettings):
    """
    Minimize the squared residual starting from z
    :return: (z, residual, iterations)
    """
    z = problem.project(z)
    r, propagated = problem.residual(z)
    cost = float(r @ r)
    jac = None
    fresh = False
    since_refresh = 0
    damping = settings.damping

    for it in range(1, settings.max_iter + 1):
        if cost < settings.residual_tol:
            return z, cost, it - 1
        if jac is None or since_refresh >= settings.refresh_every:
            jac = problem.jacobian(z, propagated)
            fresh = True
            since_refresh = 0

        normal = jac.T @ jac
        scale = np.diag(normal).copy()
        scale[scale <= 0] = 1.0
        step = scipy.linalg.solve(normal + damping * np.diag(scale), -(jac.T @ r), assume_a='pos')

        accepted = False
        fraction = 1.0
        for _ in range(settings.backtracks):
            trial = problem.project(z + fraction * step)
            r_trial, prop_trial = problem.residual(trial)
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial < cost:
                accepted = True
                break
            fraction *= 0.5

        if accepted:
            s = trial - z
            # Broyden rank-one update on the step actually taken (after norm projection)
            jac = jac + np.outer(r_trial - r - jac @ s, s) / float(s @ s)
            z, r, propagated, cost = trial, r_trial, prop_trial, cost_trial
            damping = max(damping / 3.0, 1e-15)
            fresh = False
            since_refresh += 1
            logger.debug(f'LM iteration {it}: residual {cost:.3e}, step fraction {fraction}')
        elif not fresh:
            jac = None
        else:
            damping *= 10.0
            if damping > settings.max_damping:
                break
    return z, cost, settings.max_iter


def _quartic_average(state: FloquetState) -> float:
    grid = state.grid
    return float(np.mean([grid.integrate(np.abs(s) ** 4) for s in state.snapshots]))


def _periodic_state(problem: _BranchProblem, z: np.ndarray, parity: str, n_phases: int,
                    strobe_phase: float) -> FloquetState:
    phi0 = problem.state(z)
    _, energy = problem.split(z)
    _, snapshots = propagate_period(phi0, problem.params, problem.grid, problem.config, problem.t0, n_phases)
    times = np.arange(n_phases) * DRIVE_PERIOD / n_phases
    snapshots = snapshots * np.exp(1j * energy * times / problem.hbar)[:, None]
    return FloquetState(problem.grid, snapshots, float(energy), parity, strobe_phase=strobe_phase,
                        hbar_eff=problem.hbar)


def continuation_schedule(u_start: float, u_target: float, settings: NonlinearSettings,
                          continuation_step: float = None) -> [float]:
    """
    U values visited between u_start (excluded) and u_target (included)
    """
    values = []
    u = u_start
    while u < u_target - 1e-15:
        if continuation_step:
            step = continuation_step
        else:
            step = settings.small_step if u < settings.step_switch - 1e-15 else settings.large_step
        u = min(u + step, u_target)
        values.append(round(u, 12))
    return values


def solve_nonlinear_floquet(seed, u_target: float, params: SystemParams, grid: SpatialGrid,
                            continuation_step: float = None, config: PropagatorConfig = None,
                            floquet_settings: FloquetSettings = None,
                            settings: NonlinearSettings = None) -> [NonlinearFloquetSolution]:
    """
    Continue a Floquet state in U up to u_target
    :param seed: a linear FloquetState (U = 0) or a NonlinearFloquetSolution to continue from
    :param u_target: final nonlinearity
    :param params: system parameters; u_nl is taken from the continuation, not from here
    :param grid: spatial grid shared with the seed
    :param continuation_step: constant U increment; default is the small/large schedule of settings
    :param config: propagator configuration
    :param floquet_settings: basis size and phase sampling
    :param settings: solver settings
    :return: the solutions at every visited U, in increasing U
    """
    config = config or PropagatorConfig()
    floquet_settings = floquet_settings or FloquetSettings()
    settings = settings or NonlinearSettings()

    if isinstance(seed, NonlinearFloquetSolution):
        state, u_prev, parent = seed.state, seed.u_nl, seed.solution_id
    else:
        state, u_prev, parent = seed, 0.0, None
    grid.check_same(state.grid)
    if u_target < u_prev:
        raise ValueError(f'u_target {u_target} is below the seed nonlinearity {u_prev}')

    basis = static_basis(params, grid, floquet_settings.basis_size)
    vectors = basis.vectors[:, basis.block(state.parity)].astype(complex)
    n_phases = state.n_phases
    coeffs = basis.grid.dx * (vectors.conj().T @ state.snapshots[0])

    def problem_at(u):
        return _BranchProblem(vectors, params.replace(u_nl=u), grid, config, state.strobe_phase, settings.fd_step)

    solutions = []
    next_id = 0 if parent is None else parent + 1
    z_prev = _BranchProblem.join(coeffs, state.eigenvalue)
    for u in continuation_schedule(u_prev, u_target, settings, continuation_step):
        attempts = [u_prev + (u - u_prev) / 2 ** j for j in range(settings.bisections + 1)]
        done = False
        while attempts and not done:
            u_try = attempts.pop(0)
            shift = (u_try - u_prev) * _quartic_average(state)
            z0 = z_prev.copy()
            z0[-1] += shift
            problem = problem_at(u_try)
            z, cost, iterations = _levenberg_marquardt(problem, z0, settings)
            if cost >= settings.residual_tol:
                logger.debug(f'{state.parity} branch: residual {cost:.3e} at U={u_try:.6g}, shrinking the step')
                continue

            state = _periodic_state(problem, z, state.parity, n_phases, state.strobe_phase)
            solutions.append(NonlinearFloquetSolution(state, u_try, cost, parent, next_id, iterations))
            logger.info(f'{state.parity} branch: U={u_try:.6g} E={state.eigenvalue:.10f} residual={cost:.2e} '
                        f'({iterations} iterations)')
            parent, next_id = next_id, next_id + 1
            z_prev, u_prev = z, u_try
            # a bisected step still has to reach the scheduled U
            done = abs(u_try - u) < 1e-15
            if not done:
                attempts = [u_prev + (u - u_prev) / 2 ** j for j in range(settings.bisections + 1)]
        if not done:
            raise ContinuationStuck(f'{state.parity} branch stuck between U={u_prev:.6g} and U={u:.6g}',
                                    last_good_u=u_prev)
    return solutions


def _branch_job(seed, u_target, params, grid, continuation_step, config, floquet_settings, settings):
    try:
        return solve_nonlinear_floquet(seed, u_target, params, grid, continuation_step, config,
                                       floquet_settings, settings), None
    except NumericalError as e:
        return None, e


def solve_doublet_branches(doublet: TunnellingDoublet, u_target: float, params: SystemParams, grid: SpatialGrid,
                           continuation_step: float = None, config: PropagatorConfig = None,
                           floquet_settings: FloquetSettings = None, settings: NonlinearSettings = None,
                           n_jobs: int = 1) -> ([NonlinearFloquetSolution], [NonlinearFloquetSolution]):
    """
    Continue the even and odd doublet members to u_target, as two independent jobs
    :return: (even branch, odd branch)
    """
    jobs = Parallel(n_jobs=min(n_jobs, 2))(
        delayed(_branch_job)(seed, u_target, params, grid, continuation_step, config, floquet_settings, settings)
        for seed in (doublet.u_e, doublet.u_o))
    for _, error in jobs:
        if error is not None:
            raise error
    return jobs[0][0], jobs[1][0]


def solution_at(branch: [NonlinearFloquetSolution], u_nl: float, tol: float = 1e-12) -> NonlinearFloquetSolution:
    for solution in branch:
        if abs(solution.u_nl - u_nl) <= tol:
            return solution
    raise KeyError(f'no solution at U={u_nl}')
