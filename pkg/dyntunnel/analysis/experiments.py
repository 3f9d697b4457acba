"""
Experiment pipelines behind the command line: the linear doublet, nonlinear branches with an on-disk cache,
GPE population runs, two-mode comparisons, tunnelling-rate scans and critical-nonlinearity sweeps.

Every per-point failure is a NumericalError caught here and recorded on the result; the remaining
points still run.  Parallel jobs are merged in input order.
"""
import logging
import os

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from dyntunnel.analysis.analyze import TRAPPED, TUNNELLING, extract_tunnelling_period, tunnelling_rate
from dyntunnel.analysis.parameters import Config
from dyntunnel.analysis.result import RunRecord, TableResult
from dyntunnel.classical.islands import find_period_one_islands
from dyntunnel.errors import ConfigError, NumericalError
from dyntunnel.quantum.floquet import FloquetState, floquet_spectrum, identify_tunnelling_doublet, \
    island_superpositions, orient_doublet
from dyntunnel.quantum.nonlinear import solve_nonlinear_floquet
from dyntunnel.quantum.propagator import evolve_stroboscopic, project_populations
from dyntunnel.storage.branches import BranchStore
from dyntunnel.system import SystemParams, WaveFunction
from dyntunnel.twomode.couplings import compute_couplings, effective_params
from dyntunnel.twomode.model import TwoModeState, integrate_two_mode
from dyntunnel.twomode.trapping import is_self_trapped, linear_u_crit
from dyntunnel.utils import log, progress_enabled

logger = logging.getLogger(__name__)


class Pipeline:
    """
    Shared state of one parameter point: the islands, the linear doublet and the nonlinear branch cache
    """

    def __init__(self, config: Config, params: SystemParams = None, branch_dir: str = None):
        self.config = config
        self.params = (params or config.system_params()).replace(u_nl=0.0)
        self.grid = config.grid()
        self.propagator = config.propagator_config()
        self.floquet_settings = config.floquet_settings()
        self.nonlinear_settings = config.nonlinear_settings()
        self.branch_dir = branch_dir
        self._islands = None
        self._doublet = None
        self._spectrum = None
        self._store = None

    @property
    def islands(self):
        if self._islands is None:
            self._islands = find_period_one_islands(self.params, self.config['strobe_phase'],
                                                    self.config.newton_settings(), self.config['classical_steps'])
        return self._islands

    def linear_doublet(self):
        """
        :return: (doublet, spectrum with island weights)
        """
        if self._doublet is None:
            spectrum = floquet_spectrum(self.params, self.grid, self.propagator, self.floquet_settings)
            self._doublet, self._spectrum = identify_tunnelling_doublet(spectrum, self.islands, self.params,
                                                                        self.floquet_settings)
        return self._doublet, self._spectrum

    @property
    def store(self) -> BranchStore:
        if self._store is None and self.branch_dir:
            self._store = BranchStore(self.branch_dir)
        return self._store

    def branch_pair(self, u_nl: float) -> (FloquetState, FloquetState):
        """
        Even and odd Floquet states at u_nl: the linear doublet at U = 0, otherwise nonlinear states
        continued from the nearest cached solution below u_nl
        """
        doublet, _ = self.linear_doublet()
        if u_nl == 0:
            return doublet.u_e, doublet.u_o
        pair = []
        for seed_state in (doublet.u_e, doublet.u_o):
            cached = self.store.nearest_below(seed_state.parity, u_nl) if self.store else None
            seed = cached if cached is not None else seed_state
            if cached is not None and abs(cached.u_nl - u_nl) <= 1e-12:
                pair.append(cached.state)
                continue
            branch = solve_nonlinear_floquet(seed, u_nl, self.params, self.grid,
                                             self.config.continuation_step(), self.propagator,
                                             self.floquet_settings, self.nonlinear_settings)
            if self.store:
                self.store.save_branch(branch, self.params)
            pair.append(branch[-1].state)
        return pair[0], pair[1]

    def island_modes(self, even: FloquetState, odd: FloquetState, u_nl: float) -> (WaveFunction, WaveFunction):
        """
        phi+- at phase 0, with the doublet phase convention applied to the given pair
        """
        even, odd = orient_doublet(even, odd, self.params.replace(u_nl=u_nl), self.islands, self.floquet_settings)
        plus, minus = island_superpositions(even, odd)
        return WaveFunction(self.grid, plus[0]).normalized(), WaveFunction(self.grid, minus[0]).normalized()

    def population_run(self, u_nl: float, n_periods: int, label: str = '') -> RunRecord:
        even, odd = self.branch_pair(u_nl)
        phi_plus, phi_minus = self.island_modes(even, odd, u_nl)
        return run_population(self.params.replace(u_nl=u_nl), phi_plus, phi_minus, n_periods, self.config, label)

    def couplings(self, u_nl: float):
        even, odd = self.branch_pair(u_nl)
        # the linear pair is measured at unit nonlinearity
        return compute_couplings(even, odd, u_nl or 1.0, self.config['time_samples'] or None)

    def twomode_run(self, u_nl: float, n_periods: int):
        coeffs = self.couplings(u_nl)
        if u_nl == 0:
            coeffs = coeffs.scaled(0.0)
        trajectory = integrate_two_mode(TwoModeState(1.0, 0.0), coeffs, self.config['twomode_mode'], n_periods)
        return coeffs, trajectory


def run_population(params: SystemParams, phi_plus: WaveFunction, phi_minus: WaveFunction, n_periods: int,
                   config: Config, label: str = '', psi0: WaveFunction = None) -> RunRecord:
    """
    Evolve psi0 (default phi+) with the GPE, project every stroboscopic state on phi+- and classify the
    imbalance series
    """
    if config['strobe_phase'] != 0:
        raise ConfigError('strobe_phase', 'population runs sample at phase 0')
    overlaps = []

    def project(record, psi):
        d_plus, d_minus, _ = project_populations(psi, phi_plus, phi_minus)
        overlaps.append((d_plus, d_minus))

    try:
        records = evolve_stroboscopic(phi_plus if psi0 is None else psi0, n_periods, params,
                                      config.propagator_config(), config['store_every'], callback=project)
    except NumericalError as e:
        if e.partial:
            e.partial = _partial_run(params, e.partial, overlaps, label, f'{type(e).__name__}: {e}')
        raise
    d_series = np.array(overlaps)
    run = RunRecord(params, records, d_series, label=label)
    run.n_tot_floor = float(np.min(np.sum(np.abs(d_series) ** 2, axis=1)))
    run.extraction = extract_tunnelling_period(run.z, config['trap_floor'])
    log(f'U={params.u_nl:.6g}: {run.classification}'
        + (f', period {run.extracted_period:.1f}' if run.extracted_period else '')
        + f', n_tot >= {run.n_tot_floor:.3f}')
    return run


def _partial_run(params: SystemParams, records, overlaps, label: str, error: str) -> RunRecord:
    """
    The periods finished before a failure; no verdict is drawn from them
    """
    run = RunRecord(params, records, np.array(overlaps[:len(records)]), label=label)
    run.n_tot_floor = float(np.min(np.sum(np.abs(run.d_series) ** 2, axis=1)))
    run.errors.append(error)
    return run


def _safe(fn, *args):
    """
    Run fn, turning a NumericalError into (None, message)
    """
    try:
        return fn(*args), None
    except NumericalError as e:
        return None, f'{type(e).__name__}: {e}'


def _parallel(jobs, n_jobs: int, desc: str):
    jobs = list(jobs)
    if n_jobs == 1:
        return [fn(*args) for fn, args in tqdm(jobs, desc=desc, disable=not progress_enabled(), leave=False)]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(*args) for fn, args in jobs)


def _prepare_branches(pipeline: Pipeline, u_values, result: TableResult) -> set:
    """
    Continue the branches through every requested U in increasing order
    :return: the U values at which both branches exist
    """
    available = set()
    for u in sorted(set(u_values)):
        _, error = _safe(pipeline.branch_pair, u)
        if error:
            result.add_error(f'U={u:.6g}: {error}')
        else:
            available.add(u)
    return available


def run_figure2(config: Config, out: str, n_jobs: int = 1) -> (TableResult, [RunRecord]):
    """
    Population runs from phi+ at every U of u_list, compared with the time-dependent two-mode model
    """
    pipeline = Pipeline(config, branch_dir=os.path.join(out, 'branches'))
    result = TableResult('fig2')
    u_list = config['u_list']
    n_periods = config['n_periods']
    available = _prepare_branches(pipeline, u_list, result)

    runs = _parallel(((_safe, (pipeline.population_run, u, n_periods, f'U{u:.6g}')) for u in u_list), n_jobs, 'fig2')
    records = []
    for u, (run, error) in zip(u_list, runs):
        row = {'u_nl': u, 'classification': None, 'period': None, 'n_tot_floor': None,
               'twomode_classification': None, 'twomode_period': None}
        if u in available and error is None:
            records.append(run)
            row.update(classification=run.classification, period=run.extracted_period, n_tot_floor=run.n_tot_floor)
            outcome, tm_error = _safe(pipeline.twomode_run, u, n_periods)
            if tm_error:
                result.add_error(f'U={u:.6g} two-mode: {tm_error}')
            else:
                _, trajectory = outcome
                run.twomode = trajectory
                extraction = extract_tunnelling_period(trajectory.z, config['trap_floor'])
                row.update(twomode_classification=extraction.classification, twomode_period=extraction.period)
        elif error:
            result.add_error(f'U={u:.6g}: {error}')
        result.add_row(row)
    return result, records


def _rates_at(pipeline: Pipeline, u: float, n_periods: int, trap_floor: float) -> dict:
    row = {'u_nl': u, 'rate_gpe': None, 'rate_twomode': None, 'rate_nl': None}
    errors = []
    run, error = _safe(pipeline.population_run, u, n_periods)
    if error:
        errors.append(f'U={u:.6g} GPE: {error}')
    else:
        row['rate_gpe'] = tunnelling_rate(run.extraction)

    result, error = _safe(pipeline.twomode_run, u, n_periods)
    if error:
        errors.append(f'U={u:.6g} two-mode: {error}')
    else:
        coeffs, trajectory = result
        row['rate_twomode'] = tunnelling_rate(extract_tunnelling_period(trajectory.z, trap_floor))
        row['rate_nl'] = abs(coeffs.delta_e) / coeffs.hbar_eff
    return row, errors


def run_figure3a(config: Config, out: str, n_jobs: int = 1) -> TableResult:
    """
    Tunnelling rates per drive period against U: GPE runs, the two-mode model and |E_e - E_o| / hbar
    """
    pipeline = Pipeline(config, branch_dir=os.path.join(out, 'branches'))
    result = TableResult('fig3a')
    u_grid = config['u_grid']
    available = _prepare_branches(pipeline, u_grid, result)

    jobs = ((_rates_at, (pipeline, u, config['n_periods'], config['trap_floor'])) for u in u_grid if u in available)
    rows = iter(_parallel(jobs, n_jobs, 'fig3a'))
    for u in u_grid:
        if u in available:
            row, errors = next(rows)
            for e in errors:
                result.add_error(e)
        else:
            row = {'u_nl': u, 'rate_gpe': None, 'rate_twomode': None, 'rate_nl': None}
        result.add_row(row)
    return result


def bisect_onset(is_trapped, scan: [float], resolution: float):
    """
    Smallest trapping nonlinearity: the first trapped point of a coarse scan, then bisection against the
    last tunnelling point below it until the bracket is narrower than resolution times its upper end
    :param is_trapped: U -> bool
    :param scan: increasing positive U values
    :param resolution: relative bracket width at which to stop
    :return: (estimate, (lo, hi)) or (None, None) when no scan point traps
    """
    lo = 0.0
    hi = None
    for u in scan:
        if is_trapped(u):
            hi = u
            break
        lo = u
    if hi is None:
        return None, None
    while hi - lo > resolution * hi:
        mid = 0.5 * (lo + hi)
        if is_trapped(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), (lo, hi)


def critical_point(config: Config, params: SystemParams, branch_dir: str) -> (dict, [str], [str]):
    """
    Three U_crit estimates at one parameter point: the linear-state formula, two-mode bisection on the
    closed-form trapping decision, and GPE bisection on run classifications with a confirmation run
    :return: (row, errors, warnings)
    """
    pipeline = Pipeline(config, params, branch_dir)
    row = {'delta_e': None, 't_lin_periods': None, 'u_crit_linear': None, 'degenerate': None, 'u_crit_twomode': None,
           'u_crit_gpe': None, 'gpe_confirmed': None}
    errors, warnings = [], []
    outcome, error = _safe(pipeline.linear_doublet)
    if error:
        return row, [error], warnings
    doublet, _ = outcome
    row['delta_e'] = abs(doublet.delta_lambda)
    row['t_lin_periods'] = doublet.t_lin_periods
    coeffs, error = _safe(compute_couplings, doublet.u_e, doublet.u_o, 1.0, config['time_samples'] or None)
    if error:
        errors.append(f'linear estimate: {error}')
    else:
        row['u_crit_linear'], row['degenerate'] = linear_u_crit(coeffs)
        if row['degenerate']:
            warnings.append('degenerate doublet: linear U_crit reported as 0')

    scan = [u for u in sorted(config['u_grid']) if 0 < u <= config['u_search_max']]
    resolution = config['bisection_resolution']

    def twomode_trapped(u):
        return bool(is_self_trapped(effective_params(pipeline.couplings(u))))

    def gpe_trapped(u):
        return pipeline.population_run(u, config['bisection_periods']).classification == TRAPPED

    outcome, error = _safe(bisect_onset, twomode_trapped, scan, resolution)
    estimate = outcome[0] if outcome else None
    if error:
        errors.append(f'two-mode bisection: {error}')
    elif estimate is None:
        warnings.append(f'two-mode model never traps up to U={config["u_search_max"]}')
    row['u_crit_twomode'] = estimate

    outcome, error = _safe(bisect_onset, gpe_trapped, scan, resolution)
    estimate, bracket = outcome if outcome else (None, None)
    if error:
        errors.append(f'GPE bisection: {error}')
    elif estimate is None:
        warnings.append(f'GPE runs never trap up to U={config["u_search_max"]}')
    else:
        run, error = _safe(pipeline.population_run, bracket[1], config['n_periods'])
        row['gpe_confirmed'] = None if error else run.classification == TRAPPED
        if error:
            errors.append(f'GPE confirmation: {error}')
        elif not row['gpe_confirmed']:
            warnings.append(f'confirmation run at U={bracket[1]:.6g} is {run.classification}, not trapped')
    row['u_crit_gpe'] = estimate
    return row, errors, warnings


def _sweep_params(config: Config) -> [SystemParams]:
    base = config.system_params(0.0)
    return [base.replace(**{config['sweep_key']: v}) for v in config['sweep_values']]


def run_figure3bc(config: Config, out: str, n_jobs: int = 1) -> TableResult:
    """
    U_crit estimates and |Delta E| over the sweep values of sweep_key
    """
    key = config['sweep_key']
    result = TableResult('fig3bc')
    jobs = ((critical_point, (config, params, os.path.join(out, 'branches', f'{key}={getattr(params, key):.6g}')))
            for params in _sweep_params(config))
    for value, (row, errors, warnings) in zip(config['sweep_values'], _parallel(jobs, n_jobs, 'fig3bc')):
        for e in errors:
            result.add_error(f'{key}={value:.6g}: {e}')
        for w in warnings:
            result.add_warning(f'{key}={value:.6g}: {w}')
        result.add_row(dict({key: value}, **row))
    return result


def doublet_point(config: Config, params: SystemParams) -> (dict, str):
    pipeline = Pipeline(config, params)
    row = {'delta_lambda': None, 't_lin_periods': None, 'u_crit_linear': None, 'degenerate': None, 'lambda0': None,
           'x_star': None, 'p_star': None, 'weight_even': None, 'weight_odd': None}
    try:
        doublet, _ = pipeline.linear_doublet()
        plus, _ = pipeline.islands
        coeffs = compute_couplings(doublet.u_e, doublet.u_o, 1.0, config['time_samples'] or None)
        row.update(delta_lambda=doublet.delta_lambda, t_lin_periods=doublet.t_lin_periods,
                   lambda0=effective_params(coeffs).lambda0, x_star=plus.x_star, p_star=plus.p_star,
                   weight_even=doublet.u_e.island_weight, weight_odd=doublet.u_o.island_weight)
        row['u_crit_linear'], row['degenerate'] = linear_u_crit(coeffs)
    except NumericalError as e:
        return row, f'{type(e).__name__}: {e}'
    return row, None


def sweep(config: Config, n_jobs: int = 1) -> TableResult:
    """
    Doublet splitting and linear U_crit at every value of the swept parameter
    """
    key = config['sweep_key']
    result = TableResult('sweep')
    jobs = ((doublet_point, (config, params)) for params in _sweep_params(config))
    for value, (row, error) in zip(config['sweep_values'], _parallel(jobs, n_jobs, 'sweep')):
        if error:
            result.add_error(f'{key}={value:.6g}: {error}')
        elif row['degenerate']:
            result.add_warning(f'{key}={value:.6g}: degenerate doublet, linear U_crit reported as 0')
        result.add_row(dict({key: value}, **row))
    return result


def classify_twomode(coeffs) -> dict:
    """
    Verdict row of a coupling set: effective parameters, trapping decision and the small-beta ratio
    """
    eff = effective_params(coeffs)
    decision = is_self_trapped(eff)
    return {'lambda': eff.lambda_cap, 'alpha': eff.alpha, 'beta': eff.beta, 'lambda0': eff.lambda0,
            'ratio': decision.ratio, 'trapped': decision.trapped, 'witness_phi': decision.witness,
            'verdict': decision.verdict}


__all__ = ['Pipeline', 'run_population', 'run_figure2', 'run_figure3a', 'run_figure3bc', 'sweep',
           'critical_point', 'bisect_onset', 'classify_twomode', 'TUNNELLING', 'TRAPPED']
