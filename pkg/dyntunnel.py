import os

# one BLAS thread per process; parallelism comes from joblib workers
for _var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
    os.environ.setdefault(_var, '1')

import argparse
import json
import sys

import numpy as np
import pandas as pd

from dyntunnel.analysis.experiments import Pipeline, classify_twomode, critical_point, run_figure2, \
    run_figure3a, run_figure3bc, run_population, sweep
from dyntunnel.analysis.parameters import add_parameter_flags, all_params, load_config
from dyntunnel.analysis.result import TableResult
from dyntunnel.classical.dynamics import chaotic_fraction, poincare_section, seed_lattice
from dyntunnel.errors import ConfigError, DynTunnelError, NumericalError
from dyntunnel.quantum.floquet import island_superpositions, orient_doublet, spectrum_frame
from dyntunnel.quantum.husimi import husimi, island_mass, island_radius
from dyntunnel.quantum.relax import imaginary_time_ground_state
from dyntunnel.spreadsheet.xls import output_to_xls
from dyntunnel.storage.snapshot import read_snapshot, write_floquet_state, write_snapshot
from dyntunnel.storage.tables import FORMATS, write_manifest, write_matrix, write_table
from dyntunnel.system import WaveFunction
from dyntunnel.twomode.couplings import compute_couplings
from dyntunnel.twomode.trapping import linear_u_crit
from dyntunnel.utils import float_to_percent, float_to_sci, log, setup_logging

HUSIMI_STATES = ('even', 'odd', 'plus', 'minus')


def _config(args):
    overrides = {p.key: getattr(args, p.key) for p in all_params}
    return load_config(args.config, overrides)


def _report(result: TableResult):
    """
    Log the issues of a run, the way parse results are reported
    """
    if result.has_issues():
        log(f'{len(result.errors)} errors and {len(result.warnings)} warnings found:')
        for e in result.errors:
            log(f'\tERROR: {e}')
        for w in result.warnings:
            log(f'\tWARNING: {w}')


def _write_result(args, config, result: TableResult):
    write_table(result.to_frame(), args.out, result.name, args.format)
    with open(os.path.join(args.out, f'{result.name}_summary.json'), 'w') as f:
        f.write(result.to_json())
    if args.xls:
        output_to_xls(result, config, args.out)
    _report(result)
    return 3 if result.errors else 0


def _write_json(path: str, payload: dict):
    with open(path, 'w') as f:
        json.dump(payload, f, indent=4, default=float)
    log(f'Wrote {path}')


def list_params(args):
    log('All Parameters')
    log('****************')
    [log(p.help_text()) for p in all_params]
    return 0


def cmd_poincare(args, config):
    params = config.system_params()
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    seeds = seed_lattice((-config['seed_x_max'], config['seed_x_max']), (-config['seed_p_max'], config['seed_p_max']),
                         config['seeds_x'], config['seeds_p'], rng)
    log(f'Poincare section of {len(seeds)} seeds over {config["poincare_periods"]} periods')
    section = poincare_section(seeds, config['poincare_periods'], params, config['strobe_phase'],
                               config['classical_steps'], args.threads)
    write_table(section.to_frame(), args.out, 'poincare', args.format)

    fraction = chaotic_fraction(seeds, params, config['lyapunov_periods'], config['chaos_threshold'],
                                config['classical_steps'], args.threads)
    log(f'Chaotic fraction of the seed lattice: {float_to_percent(fraction)}')
    _write_json(os.path.join(args.out, 'poincare_summary.json'),
                {'n_seeds': len(seeds), 'n_periods': config['poincare_periods'], 'chaotic_fraction': fraction})
    return 0


def cmd_islands(args, config):
    pipeline = Pipeline(config)
    plus, minus = pipeline.islands
    rows = [{'island': name, 'x_star': i.x_star, 'p_star': i.p_star, 'trace': i.stability}
            for name, i in (('I+', plus), ('I-', minus))]
    for r in rows:
        log(f'{r["island"]}: x* = {r["x_star"]:.8f}, p* = {r["p_star"]:.8f}, trace = {r["trace"]:.6f}')
    write_table(pd.DataFrame(rows), args.out, 'islands', args.format)

    seeds = seed_lattice((-config['seed_x_max'], config['seed_x_max']), (-config['seed_p_max'], config['seed_p_max']),
                         config['seeds_x'], config['seeds_p'])
    fraction = chaotic_fraction(seeds, pipeline.params, config['lyapunov_periods'], config['chaos_threshold'],
                                config['classical_steps'], args.threads)
    log(f'Chaotic fraction of the seed lattice: {float_to_percent(fraction)}')
    _write_json(os.path.join(args.out, 'islands_summary.json'),
                {'islands': rows, 'chaotic_fraction': fraction, 'strobe_phase': config['strobe_phase']})
    return 0


def cmd_floquet(args, config):
    pipeline = Pipeline(config)
    doublet, spectrum = pipeline.linear_doublet()
    write_table(spectrum_frame(spectrum), args.out, 'floquet_spectrum', args.format)
    write_floquet_state(os.path.join(args.out, 'u_even.dtwf'), doublet.u_e, pipeline.params)
    write_floquet_state(os.path.join(args.out, 'u_odd.dtwf'), doublet.u_o, pipeline.params)
    log(f'Tunnelling doublet: Delta lambda = {float_to_sci(doublet.delta_lambda)}, '
        f'T_lin = {doublet.t_lin_periods:.1f} periods')
    _write_json(os.path.join(args.out, 'doublet.json'), {
        'lambda_even': doublet.u_e.eigenvalue,
        'lambda_odd': doublet.u_o.eigenvalue,
        'delta_lambda': doublet.delta_lambda,
        't_lin': doublet.t_lin,
        't_lin_periods': doublet.t_lin_periods,
        'island_weight_even': doublet.u_e.island_weight,
        'island_weight_odd': doublet.u_o.island_weight,
    })
    return 0


def cmd_husimi(args, config):
    pipeline = Pipeline(config)
    doublet, _ = pipeline.linear_doublet()
    even, odd = orient_doublet(doublet.u_e, doublet.u_o, pipeline.params, pipeline.islands, pipeline.floquet_settings)
    plus, minus = island_superpositions(even, odd)
    amplitudes = {'even': even.snapshots[0], 'odd': odd.snapshots[0], 'plus': plus[0], 'minus': minus[0]}
    psi = WaveFunction(pipeline.grid, amplitudes[args.state]).normalized()

    q = husimi(psi, pipeline.params, config.lattice())
    radius = island_radius(pipeline.islands[0].p_star, pipeline.params.hbar_eff, config['island_radius_factor'],
                           config['island_radius_hbar'])
    m_plus, m_minus = island_mass(q, pipeline.islands, radius)
    log(f'Husimi masses of the {args.state} state: m+ = {m_plus:.4f}, m- = {m_minus:.4f}')
    write_matrix(q.to_frame(), args.out, f'husimi_{args.state}',
                 {'hbar_eff': q.hbar_eff, 'sigma_x': q.sigma_x, 'm_plus': m_plus, 'm_minus': m_minus})
    return 0


def cmd_nlfloquet(args, config):
    pipeline = Pipeline(config, branch_dir=os.path.join(args.out, 'branches'))
    u_target = config['u_target']
    log(f'Continuing the doublet branches to U = {u_target}')
    even, odd = pipeline.branch_pair(u_target)
    index = pipeline.store.index()
    write_table(index, args.out, 'nlfloquet', args.format)
    log(f'E_e = {even.eigenvalue:.10f}, E_o = {odd.eigenvalue:.10f}, '
        f'|E_e - E_o| = {float_to_sci(abs(even.eigenvalue - odd.eigenvalue))}')
    return 0


def cmd_evolve(args, config):
    pipeline = Pipeline(config, branch_dir=os.path.join(args.out, 'branches'))
    u_nl = config['u_nl']
    even, odd = pipeline.branch_pair(u_nl)
    phi_plus, phi_minus = pipeline.island_modes(even, odd, u_nl)
    params = pipeline.params.replace(u_nl=u_nl)

    psi0 = phi_plus
    if args.restart:
        snapshot = read_snapshot(args.restart)
        if snapshot.params != params:
            log(f'WARNING: snapshot parameters {snapshot.params} differ from the configured {params}')
        psi0 = snapshot.psi
        log(f'Restarting from {args.restart} at t = {psi0.time_tag:.6f}')
        # phi+- are periodic in t; tag them with the restart time
        phi_plus = WaveFunction(phi_plus.grid, phi_plus.amplitudes, psi0.time_tag)
        phi_minus = WaveFunction(phi_minus.grid, phi_minus.amplitudes, psi0.time_tag)

    try:
        run = run_population(params, phi_plus, phi_minus, config['n_periods'], config, 'evolve', psi0)
    except NumericalError as e:
        if e.partial is None:
            raise
        log(f'{type(e).__name__}: {e}')
        log(f'Writing the {len(e.partial.records)} periods finished before the failure')
        _write_run(args, e.partial, pipeline.grid)
        return e.exit_code
    _write_run(args, run, pipeline.grid)
    return 0


def _write_run(args, run, grid):
    params = run.params
    write_table(run.populations_frame(), args.out, 'populations', args.format)
    write_matrix(run.momentum_frame(grid.p(params.hbar_eff)), args.out, 'momentum_density',
                 {'u_nl': params.u_nl, 'hbar_eff': params.hbar_eff})
    for r in run.records:
        if r.snapshot is not None:
            write_snapshot(os.path.join(args.out, f'state_{r.period_index:06d}.dtwf'), r.snapshot, params)
    _write_json(os.path.join(args.out, 'evolve_summary.json'), run.summary())


def cmd_twomode(args, config):
    pipeline = Pipeline(config, branch_dir=os.path.join(args.out, 'branches'))
    u_nl = config['u_nl']
    coeffs, trajectory = pipeline.twomode_run(u_nl, config['n_periods'])
    write_table(trajectory.to_frame(), args.out, 'twomode', args.format)
    write_table(coeffs.to_frame(), args.out, 'couplings', args.format)
    verdict = classify_twomode(coeffs) if u_nl else {}
    if verdict:
        log(f'Two-mode verdict at U = {u_nl}: {verdict["verdict"]} (|Lambda/2alpha| = {verdict["ratio"]:.4f})')
    _write_json(os.path.join(args.out, 'twomode_summary.json'),
                dict(verdict, u_nl=u_nl, delta_e=coeffs.delta_e, mode=config['twomode_mode']))
    return 0


def cmd_ucrit(args, config):
    params = config.system_params(0.0)
    if args.all:
        row, errors, warnings = critical_point(config, params, os.path.join(args.out, 'branches'))
        result = TableResult('ucrit', [row])
        for e in errors:
            result.add_error(e)
        for w in warnings:
            result.add_warning(w)
        return _write_result(args, config, result)

    doublet, _ = Pipeline(config, params).linear_doublet()
    coeffs = compute_couplings(doublet.u_e, doublet.u_o, 1.0, config['time_samples'] or None)
    estimate, degenerate = linear_u_crit(coeffs)
    log(f'U_crit = 2|Delta E|/|Lambda_0| = {estimate:.6g}')
    result = TableResult('ucrit', [{'delta_e': abs(doublet.delta_lambda), 'u_crit_linear': estimate,
                                    'degenerate': degenerate}])
    if degenerate:
        result.add_warning('degenerate doublet, linear U_crit reported as 0')
    return _write_result(args, config, result)


def cmd_fig2(args, config):
    result, runs = run_figure2(config, args.out, args.threads)
    p = config.grid().p(config['hbar_eff'])
    for run in runs:
        stem = f'fig2_{run.label}'
        frame = run.populations_frame()
        if run.twomode is not None:
            frame['twomode_n_plus'] = run.twomode.n_plus[:len(frame)]
            frame['twomode_n_minus'] = run.twomode.n_minus[:len(frame)]
        write_table(frame, args.out, f'{stem}_populations', args.format)
        write_matrix(run.momentum_frame(p), args.out, f'{stem}_momentum', {'u_nl': run.params.u_nl})
    return _write_result(args, config, result)


def cmd_fig3a(args, config):
    return _write_result(args, config, run_figure3a(config, args.out, args.threads))


def cmd_fig3bc(args, config):
    return _write_result(args, config, run_figure3bc(config, args.out, args.threads))


def cmd_sweep(args, config):
    return _write_result(args, config, sweep(config, args.threads))


def cmd_groundstate(args, config):
    params = config.system_params()
    psi, mu = imaginary_time_ground_state(params, config.grid())
    log(f'Ground state of the time-averaged potential: mu = {mu:.10f}')
    write_snapshot(os.path.join(args.out, 'groundstate.dtwf'), psi, params)
    _write_json(os.path.join(args.out, 'groundstate.json'), {'mu': mu, 'u_nl': params.u_nl})
    return 0


COMMANDS = {
    'poincare': (cmd_poincare, 'Stroboscopic Poincare section over a lattice of seeds'),
    'islands': (cmd_islands, 'Locate the period-one islands I+ and I-'),
    'floquet': (cmd_floquet, 'Linear Floquet spectrum and the tunnelling doublet'),
    'husimi': (cmd_husimi, 'Husimi function of a doublet state'),
    'nlfloquet': (cmd_nlfloquet, 'Continue the doublet into nonlinear Floquet states up to u_target'),
    'evolve': (cmd_evolve, 'GPE evolution from the island mode phi+'),
    'twomode': (cmd_twomode, 'Two-mode model from the doublet at u_nl'),
    'ucrit': (cmd_ucrit, 'Critical nonlinearity for self-trapping'),
    'fig2': (cmd_fig2, 'Population runs at every U of u_list'),
    'fig3a': (cmd_fig3a, 'Tunnelling rates over u_grid'),
    'fig3bc': (cmd_fig3bc, 'U_crit estimates over sweep_values of sweep_key'),
    'sweep': (cmd_sweep, 'Doublet splitting and linear U_crit over sweep_values of sweep_key'),
    'groundstate': (cmd_groundstate, 'Imaginary-time ground state of the time-averaged GPE'),
}


def run_command(args) -> int:
    command = args.command
    try:
        config = _config(args)
        if args.threads < 1:
            raise ConfigError('threads', 'must be >= 1')
        os.makedirs(args.out, exist_ok=True)
        write_manifest(config, args.out, command, args.seed)
        return COMMANDS[command][0](args, config)
    except DynTunnelError as e:
        log(f'{type(e).__name__}: {e}')
        return e.exit_code


def common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='INI config file; flags override its values')
    common.add_argument('--out', default='out', help='Output directory')
    common.add_argument('--threads', type=int, default=1, help='joblib worker processes')
    common.add_argument('--seed', type=int, default=None, help='Jitter the Poincare seed lattice with this seed')
    common.add_argument('--format', choices=FORMATS, default='csv', help='Table format')
    common.add_argument('--xls', action='store_true', help='Also export result tables to an XLS spreadsheet')
    common.add_argument('--verbose', action='store_true', help='Log debug messages')
    common.add_argument('--quiet', action='store_true', help='Only log warnings and errors')
    add_parameter_flags(common)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Dynamical tunnelling of a driven BEC: classical sections, '
                                                 'Floquet states, GPE runs and two-mode models')
    subparsers = parser.add_subparsers(dest='command', help='sub-command help')
    subparsers.required = True

    params_parser = subparsers.add_parser('params', help='List all the configurable parameters')
    params_parser.set_defaults(func=list_params)

    common = common_parser()
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        if name == 'husimi':
            sub.add_argument('--state', choices=HUSIMI_STATES, default='even', help='Which doublet state')
        elif name == 'evolve':
            sub.add_argument('--restart', help='Continue from a DTWF snapshot')
        elif name == 'ucrit':
            sub.add_argument('--all', action='store_true',
                             help='Also bisect with the two-mode model and GPE runs')
        sub.set_defaults(func=run_command)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(getattr(args, 'verbose', False), getattr(args, 'quiet', False))
    return args.func(args)


if __name__ == '__main__':
    sys.exit(main())
