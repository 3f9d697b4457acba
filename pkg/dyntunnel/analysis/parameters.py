import configparser

from dyntunnel.classical.islands import NewtonSettings
from dyntunnel.errors import ConfigError
from dyntunnel.quantum.floquet import FloquetSettings
from dyntunnel.quantum.husimi import LatticeSpec
from dyntunnel.quantum.nonlinear import NonlinearSettings
from dyntunnel.quantum.propagator import PropagatorConfig
from dyntunnel.system import SpatialGrid, SystemParams
from dyntunnel.utils import is_power_of_two

REQUIRED = object()


def float_list(raw: str) -> [float]:
    return [float(v) for v in raw.split(',') if v.strip()]


def format_value(val) -> str:
    if isinstance(val, (list, tuple)):
        return ','.join(repr(float(v)) for v in val)
    return str(val)


class Parameter:
    key: str
    section: str
    description: str
    default_val: object = REQUIRED
    val_type = float
    constraint: str = None

    def check(self, val) -> bool:
        return True

    def parse(self, raw):
        if not isinstance(raw, str):
            return raw
        try:
            return self.val_type(raw.strip())
        except ValueError:
            raise ConfigError(self.key, f'expected {self.val_type.__name__}, got {raw!r}')

    def help_text(self):
        default = 'required' if self.default_val is REQUIRED else format_value(self.default_val)
        return f'{self.key}\t[{self.section}]\t{default}\t{self.description}'


class Positive(Parameter):
    constraint = 'must be > 0'

    def check(self, val) -> bool:
        return val > 0


class NonNegative(Parameter):
    constraint = 'must be >= 0'

    def check(self, val) -> bool:
        return val >= 0


class Fraction(Parameter):
    constraint = 'must lie in (0, 1)'

    def check(self, val) -> bool:
        return 0 < val < 1


# [system]

class Kappa(Positive):
    key = 'kappa'
    section = 'system'
    description = 'Strength of the sqrt(1 + x^2) confining potential'


class Epsilon(NonNegative):
    key = 'epsilon'
    section = 'system'
    description = 'Relative modulation depth of the potential'


class HbarEff(Positive):
    key = 'hbar_eff'
    section = 'system'
    description = 'Effective Planck constant of the scaled model'


class Nonlinearity(NonNegative):
    key = 'u_nl'
    section = 'system'
    description = 'Mean-field interaction strength U'
    default_val = 0.0


# [grid]

class BoxHalfWidth(Positive):
    key = 'x_max'
    section = 'grid'
    description = 'The position grid covers [-x_max, x_max)'
    default_val = 40.0


class GridPoints(Parameter):
    key = 'n_points'
    section = 'grid'
    description = 'Number of grid points, a power of two'
    default_val = 2048
    val_type = int
    constraint = 'must be a power of two'

    def check(self, val) -> bool:
        return is_power_of_two(val)


# [propagator]

class StepsPerPeriod(Positive):
    key = 'steps_per_period'
    section = 'propagator'
    description = 'Split-step time steps per drive period'
    default_val = 2048
    val_type = int


class SplittingOrder(Parameter):
    key = 'splitting_order'
    section = 'propagator'
    description = 'Order of the operator splitting, 2 or 4'
    default_val = 2
    val_type = int
    constraint = 'must be 2 or 4'

    def check(self, val) -> bool:
        return val in (2, 4)


class BoundaryTolerance(Positive):
    key = 'boundary_tol'
    section = 'propagator'
    description = 'Largest density allowed near the box edges before a run is flagged'
    default_val = 1e-10


# [classical]

class ClassicalSteps(Positive):
    key = 'classical_steps'
    section = 'classical'
    description = 'Symplectic integrator steps per drive period'
    default_val = 2048
    val_type = int


class StrobePhase(Parameter):
    key = 'strobe_phase'
    section = 'classical'
    description = 'Drive phase of the stroboscopic sampling'
    default_val = 0.0


class PoincareSeedsX(Positive):
    key = 'seeds_x'
    section = 'classical'
    description = 'Poincare seed lattice size along x'
    default_val = 24
    val_type = int


class PoincareSeedsP(Positive):
    key = 'seeds_p'
    section = 'classical'
    description = 'Poincare seed lattice size along p'
    default_val = 24
    val_type = int


class SeedWindowX(Positive):
    key = 'seed_x_max'
    section = 'classical'
    description = 'Seeds cover x in [-seed_x_max, seed_x_max]'
    default_val = 6.0


class SeedWindowP(Positive):
    key = 'seed_p_max'
    section = 'classical'
    description = 'Seeds cover p in [-seed_p_max, seed_p_max]'
    default_val = 3.0


class PoincarePeriods(Positive):
    key = 'poincare_periods'
    section = 'classical'
    description = 'Drive periods recorded per Poincare seed'
    default_val = 400
    val_type = int


class LyapunovPeriods(Positive):
    key = 'lyapunov_periods'
    section = 'classical'
    description = 'Drive periods of the chaos indicator window'
    default_val = 200
    val_type = int


class ChaosThreshold(Positive):
    key = 'chaos_threshold'
    section = 'classical'
    description = 'Indicator value above which a seed counts as chaotic'
    default_val = 1e-2


class NewtonSeeds(Positive):
    key = 'newton_seeds'
    section = 'classical'
    description = 'Newton seeds per axis of the fixed-point search'
    default_val = 32
    val_type = int


class EllipticMargin(NonNegative):
    key = 'elliptic_margin'
    section = 'classical'
    description = 'A fixed point is elliptic if |trace| < 2 - elliptic_margin'
    default_val = 1e-6


# [floquet]

class BasisSize(Positive):
    key = 'basis_size'
    section = 'floquet'
    description = 'Static eigenstates used to build the one-period propagator'
    default_val = 128
    val_type = int


class FloquetPhases(Positive):
    key = 'n_phases'
    section = 'floquet'
    description = 'Stored drive phases per Floquet state; must divide steps_per_period'
    default_val = 16
    val_type = int


class GuardFraction(Fraction):
    key = 'guard_fraction'
    section = 'floquet'
    description = 'Top fraction of each parity block excluded from the leakage check'
    default_val = 0.25


class LeakTolerance(Positive):
    key = 'leak_tol'
    section = 'floquet'
    description = 'Largest propagated norm allowed to leave the truncated basis'
    default_val = 1e-8


class WeightThreshold(Fraction):
    key = 'weight_threshold'
    section = 'floquet'
    description = 'Minimal island weight of a tunnelling doublet member'
    default_val = 0.5


class IslandRadiusFactor(Positive):
    key = 'island_radius_factor'
    section = 'floquet'
    description = 'Island disk radius as a fraction of |p*|'
    default_val = 0.5


class IslandRadiusHbar(NonNegative):
    key = 'island_radius_hbar'
    section = 'floquet'
    description = 'Lower bound of the island disk radius in units of sqrt(hbar_eff)'
    default_val = 2.2


# [husimi]

class HusimiX(Positive):
    key = 'husimi_x_max'
    section = 'husimi'
    description = 'Husimi lattice covers x in [-husimi_x_max, husimi_x_max]'
    default_val = 8.0


class HusimiP(Positive):
    key = 'husimi_p_max'
    section = 'husimi'
    description = 'Husimi lattice covers p in [-husimi_p_max, husimi_p_max]'
    default_val = 3.5


class HusimiNx(Positive):
    key = 'husimi_nx'
    section = 'husimi'
    description = 'Husimi lattice points along x'
    default_val = 128
    val_type = int


class HusimiNp(Positive):
    key = 'husimi_np'
    section = 'husimi'
    description = 'Husimi lattice points along p'
    default_val = 128
    val_type = int


# [nonlinear]

class TargetNonlinearity(NonNegative):
    key = 'u_target'
    section = 'nonlinear'
    description = 'Nonlinearity up to which the doublet branches are continued'
    default_val = 0.05


class ContinuationStep(NonNegative):
    key = 'continuation_step'
    section = 'nonlinear'
    description = 'Constant continuation step in U; 0 uses 0.005 below U = 0.1 and 0.05 above'
    default_val = 0.0


class ResidualTolerance(Positive):
    key = 'residual_tol'
    section = 'nonlinear'
    description = 'Squared residual at which a nonlinear Floquet state counts as converged'
    default_val = 1e-8


class SolverIterations(Positive):
    key = 'max_iter'
    section = 'nonlinear'
    description = 'Iteration budget per continuation step'
    default_val = 60
    val_type = int


# [twomode]

class TwoModeMode(Parameter):
    key = 'twomode_mode'
    section = 'twomode'
    description = 'Coefficients of the two-mode model: averaged or time-dependent'
    default_val = 'averaged'
    val_type = str
    constraint = 'must be averaged or time-dependent'

    def check(self, val) -> bool:
        return val in ('averaged', 'time-dependent')


class TimeSamples(NonNegative):
    key = 'time_samples'
    section = 'twomode'
    description = 'Drive phases used for the coupling averages; 0 uses all stored phases'
    default_val = 0
    val_type = int


# [experiments]

class RunPeriods(Positive):
    key = 'n_periods'
    section = 'experiments'
    description = 'Drive periods of a tunnelling run'
    default_val = 1500
    val_type = int


class BisectionPeriods(Positive):
    key = 'bisection_periods'
    section = 'experiments'
    description = 'Drive periods of the runs inside a U_crit bisection'
    default_val = 600
    val_type = int


class BisectionResolution(Fraction):
    key = 'bisection_resolution'
    section = 'experiments'
    description = 'Relative bracket width at which a U_crit bisection stops'
    default_val = 0.05


class CriticalSearchLimit(Positive):
    key = 'u_search_max'
    section = 'experiments'
    description = 'Upper end of the U_crit search bracket'
    default_val = 0.1


class TrapFloor(Fraction):
    key = 'trap_floor'
    section = 'experiments'
    description = 'A series that never changes sign is trapped if min |z| stays above this floor'
    default_val = 0.1


class StoreEvery(NonNegative):
    key = 'store_every'
    section = 'experiments'
    description = 'Keep a full snapshot every this many periods of a run; 0 keeps only the last'
    default_val = 0
    val_type = int


class NonlinearityList(Parameter):
    key = 'u_list'
    section = 'experiments'
    description = 'Comma separated nonlinearities of the population runs'
    default_val = [0.012, 0.023, 0.034]
    val_type = staticmethod(float_list)
    constraint = 'must be non-negative numbers'

    def check(self, val) -> bool:
        return all(v >= 0 for v in val)


class NonlinearityGrid(NonlinearityList):
    key = 'u_grid'
    description = 'Comma separated nonlinearities of the tunnelling rate scan'
    default_val = [0.0, 0.004, 0.008, 0.012, 0.016, 0.02, 0.024, 0.028, 0.032, 0.036, 0.04]


class SweepKey(Parameter):
    key = 'sweep_key'
    section = 'experiments'
    description = 'SystemParams field swept by fig3bc and sweep'
    default_val = 'epsilon'
    val_type = str
    constraint = 'must be kappa, epsilon or hbar_eff'

    def check(self, val) -> bool:
        return val in ('kappa', 'epsilon', 'hbar_eff')


class SweepValues(Parameter):
    key = 'sweep_values'
    section = 'experiments'
    description = 'Comma separated values of the swept parameter'
    default_val = [0.1, 0.15, 0.2, 0.25, 0.3]
    val_type = staticmethod(float_list)
    constraint = 'must be a non-empty list'

    def check(self, val) -> bool:
        return len(val) > 0


all_params = [
    Kappa(),
    Epsilon(),
    HbarEff(),
    Nonlinearity(),
    BoxHalfWidth(),
    GridPoints(),
    StepsPerPeriod(),
    SplittingOrder(),
    BoundaryTolerance(),
    ClassicalSteps(),
    StrobePhase(),
    PoincareSeedsX(),
    PoincareSeedsP(),
    SeedWindowX(),
    SeedWindowP(),
    PoincarePeriods(),
    LyapunovPeriods(),
    ChaosThreshold(),
    NewtonSeeds(),
    EllipticMargin(),
    BasisSize(),
    FloquetPhases(),
    GuardFraction(),
    LeakTolerance(),
    WeightThreshold(),
    IslandRadiusFactor(),
    IslandRadiusHbar(),
    HusimiX(),
    HusimiP(),
    HusimiNx(),
    HusimiNp(),
    TargetNonlinearity(),
    ContinuationStep(),
    ResidualTolerance(),
    SolverIterations(),
    TwoModeMode(),
    TimeSamples(),
    RunPeriods(),
    BisectionPeriods(),
    BisectionResolution(),
    CriticalSearchLimit(),
    TrapFloor(),
    StoreEvery(),
    NonlinearityList(),
    NonlinearityGrid(),
    SweepKey(),
    SweepValues(),
]

params_by_key = dict((p.key, p) for p in all_params)

SECTIONS = list(dict.fromkeys(p.section for p in all_params))
MANIFEST_SECTION = 'manifest'


class Config:
    """
    Resolved values of every tunable: defaults, overridden by a config file, overridden by CLI flags
    """

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **changes) -> 'Config':
        values = dict(self.values)
        for key, val in changes.items():
            values[key] = validate(params_by_key[key], val)
        return Config(values)

    def system_params(self, u_nl: float = None) -> SystemParams:
        return SystemParams(self['kappa'], self['epsilon'], self['hbar_eff'],
                            self['u_nl'] if u_nl is None else u_nl)

    def grid(self) -> SpatialGrid:
        return SpatialGrid(self['x_max'], self['n_points'])

    def propagator_config(self) -> PropagatorConfig:
        return PropagatorConfig(self['steps_per_period'], self['splitting_order'], boundary_tol=self['boundary_tol'])

    def newton_settings(self) -> NewtonSettings:
        return NewtonSettings(x_range=(-self['seed_x_max'], self['seed_x_max']),
                              p_range=(-self['seed_p_max'], self['seed_p_max']),
                              n_seeds=self['newton_seeds'], elliptic_margin=self['elliptic_margin'])

    def lattice(self) -> LatticeSpec:
        return LatticeSpec((-self['husimi_x_max'], self['husimi_x_max']), (-self['husimi_p_max'], self['husimi_p_max']),
                           self['husimi_nx'], self['husimi_np'])

    def floquet_settings(self) -> FloquetSettings:
        return FloquetSettings(basis_size=self['basis_size'], n_phases=self['n_phases'],
                               strobe_phase=self['strobe_phase'], leak_tol=self['leak_tol'],
                               guard_fraction=self['guard_fraction'], weight_threshold=self['weight_threshold'],
                               island_radius_factor=self['island_radius_factor'],
                               island_radius_hbar=self['island_radius_hbar'], husimi=self.lattice())

    def nonlinear_settings(self) -> NonlinearSettings:
        return NonlinearSettings(residual_tol=self['residual_tol'], max_iter=self['max_iter'])

    def continuation_step(self) -> float:
        return self['continuation_step'] or None

    def to_parser(self, manifest: dict = None) -> configparser.ConfigParser:
        parser = configparser.ConfigParser(interpolation=None)
        for section in SECTIONS:
            parser[section] = {p.key: format_value(self.values[p.key]) for p in all_params if p.section == section}
        if manifest:
            parser[MANIFEST_SECTION] = {k: str(v) for k, v in manifest.items()}
        return parser

    def write(self, path: str, manifest: dict = None):
        with open(path, 'w') as f:
            self.to_parser(manifest).write(f)


def validate(param: Parameter, raw):
    val = param.parse(raw)
    if not param.check(val):
        raise ConfigError(param.key, param.constraint)
    return val


def read_config_file(path: str) -> dict:
    """
    Raw values of an INI config file, keyed by parameter.  The [manifest] section of a written manifest is ignored.
    """
    parser = configparser.ConfigParser(interpolation=configparser.ExtendedInterpolation())
    if not parser.read(path):
        raise ConfigError('config', f'cannot read {path}')

    raw = dict()
    for section in parser.sections():
        if section == MANIFEST_SECTION:
            continue
        if section not in SECTIONS:
            raise ConfigError(section, 'unknown section')
        for key, val in parser.items(section):
            param = params_by_key.get(key)
            if param is None:
                raise ConfigError(key, 'unknown parameter')
            if param.section != section:
                raise ConfigError(key, f'belongs in [{param.section}], found in [{section}]')
            raw[key] = val
    return raw


def load_config(path: str = None, overrides: dict = None) -> Config:
    """
    Resolve every parameter: default < config file < overrides
    :param path: optional INI config file
    :param overrides: values from the command line, keyed by parameter; None entries are ignored
    :return: Config
    """
    raw = read_config_file(path) if path else dict()
    for key, val in (overrides or dict()).items():
        if val is not None:
            raw[key] = val

    values = dict()
    for p in all_params:
        if p.key in raw:
            values[p.key] = validate(p, raw[p.key])
        elif p.default_val is REQUIRED:
            raise ConfigError(p.key, 'required but missing')
        else:
            values[p.key] = p.default_val

    if values['steps_per_period'] % values['n_phases']:
        raise ConfigError('n_phases', f'must divide steps_per_period={values["steps_per_period"]}')
    if values['basis_size'] > values['n_points']:
        raise ConfigError('basis_size', f'must not exceed n_points={values["n_points"]}')
    return Config(values)


def add_parameter_flags(parser):
    """
    Expose every parameter as a --<key> flag of an argparse parser
    """
    for p in all_params:
        parser.add_argument(f'--{p.key}', type=str, default=None, help=p.description)
