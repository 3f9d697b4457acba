"""
Linear (U = 0) Floquet analysis: the one-period evolution operator in a truncated eigenbasis of the
time-averaged Hamiltonian, its eigenstates and quasi-energies, and the even/odd tunnelling doublet
living on the period-one islands.

The monodromy commutes with parity, so it is built and diagonalized per parity block.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from dyntunnel.errors import BasisTooSmall, DegenerateUnresolved, DoubletNotFound
from dyntunnel.quantum.husimi import LatticeSpec, husimi, island_mass, island_radius
from dyntunnel.quantum.propagator import PropagatorConfig, propagate_period
from dyntunnel.system import DRIVE_PERIOD, SpatialGrid, SystemParams, WaveFunction
from dyntunnel.utils import fold_to_window

logger = logging.getLogger(__name__)

EVEN = 'even'
ODD = 'odd'
PARITY_SIGN = {EVEN: 1, ODD: -1}


@dataclass(frozen=True)
class FloquetSettings:
    basis_size: int = 128
    n_phases: int = 16
    strobe_phase: float = 0.0
    leak_tol: float = 1e-8
    guard_fraction: float = 0.25
    guard_weight_tol: float = 1e-6
    degeneracy_tol: float = 1e-10
    cross_parity_tol: float = 1e-8
    weight_threshold: float = 0.5
    island_radius_factor: float = 0.5
    island_radius_hbar: float = 2.2
    husimi: LatticeSpec = field(default_factory=LatticeSpec)


@dataclass(frozen=True, eq=False)
class StaticBasis:
    grid: SpatialGrid
    energies: np.ndarray
    vectors: np.ndarray     # (n_points, basis_size), unit norm under grid quadrature
    parity: np.ndarray      # +1 / -1 per vector

    def block(self, parity: str) -> np.ndarray:
        return np.flatnonzero(self.parity == PARITY_SIGN[parity])

    def coefficients(self, states: np.ndarray, indices=None) -> np.ndarray:
        vectors = self.vectors if indices is None else self.vectors[:, indices]
        return self.grid.dx * (vectors.conj().T @ states)


@dataclass(frozen=True, eq=False)
class FloquetState:
    """
    A periodic Floquet mode sampled at n_phases equally spaced drive phases from the strobe phase.
    Snapshot k is exp(i E t_k / hbar) U(t0, t0 + t_k) applied to the phase-0 state.
    """
    grid: SpatialGrid
    snapshots: np.ndarray   # (n_phases, n_points)
    eigenvalue: float
    parity: str
    island_weight: float = float('nan')
    strobe_phase: float = 0.0
    hbar_eff: float = 1.0
    mean_energy: float = float('nan')

    @property
    def n_phases(self) -> int:
        return self.snapshots.shape[0]

    def phase_time(self, k: int) -> float:
        return self.strobe_phase + k * DRIVE_PERIOD / self.n_phases

    def snapshot(self, k: int = 0) -> WaveFunction:
        return WaveFunction(self.grid, self.snapshots[k], self.phase_time(k))

    def with_eigenvalue(self, eigenvalue: float) -> 'FloquetState':
        """
        Re-express the mode with a quasi-energy shifted by a multiple of hbar; the snapshots pick up
        the matching periodic phase.
        """
        times = np.array([k * DRIVE_PERIOD / self.n_phases for k in range(self.n_phases)])
        phases = np.exp(1j * (eigenvalue - self.eigenvalue) * times / self.hbar_eff)
        return self._copy(snapshots=self.snapshots * phases[:, None], eigenvalue=eigenvalue)

    def with_phase(self, factor: complex) -> 'FloquetState':
        return self._copy(snapshots=self.snapshots * factor)

    def with_island_weight(self, weight: float) -> 'FloquetState':
        return self._copy(island_weight=weight)

    def _copy(self, **changes) -> 'FloquetState':
        values = dict(grid=self.grid, snapshots=self.snapshots, eigenvalue=self.eigenvalue, parity=self.parity,
                      island_weight=self.island_weight, strobe_phase=self.strobe_phase, hbar_eff=self.hbar_eff,
                      mean_energy=self.mean_energy)
        values.update(changes)
        return FloquetState(**values)


@dataclass(frozen=True, eq=False)
class TunnellingDoublet:
    u_e: FloquetState
    u_o: FloquetState
    delta_lambda: float
    t_lin: float

    @property
    def t_lin_periods(self) -> float:
        return self.t_lin / DRIVE_PERIOD

    def island_modes(self) -> (np.ndarray, np.ndarray):
        return island_superpositions(self.u_e, self.u_o)


def island_superpositions(even: FloquetState, odd: FloquetState) -> (np.ndarray, np.ndarray):
    """
    Snapshots of (even +- i odd) / sqrt(2), localized on I+ and I- respectively
    """
    plus = (even.snapshots + 1j * odd.snapshots) / math.sqrt(2.0)
    minus = (even.snapshots - 1j * odd.snapshots) / math.sqrt(2.0)
    return plus, minus


def quasi_energy(eigenvalue: complex, hbar_eff: float) -> float:
    """
    lambda = -hbar arg(mu) / T folded into (-pi hbar / T, pi hbar / T]
    """
    return fold_to_window(-hbar_eff * np.angle(eigenvalue) / DRIVE_PERIOD, 2.0 * np.pi * hbar_eff / DRIVE_PERIOD)


def static_basis(params: SystemParams, grid: SpatialGrid, basis_size: int) -> StaticBasis:
    """
    Lowest eigenstates of p^2 / 2 + kappa sqrt(1 + x^2) by dense diagonalization on the grid, with the
    spectral (circulant) kinetic matrix.
    :param params: system parameters
    :param grid: spatial grid
    :param basis_size: number of eigenstates to keep
    :return: StaticBasis
    """
    if basis_size > grid.n_points:
        raise ValueError(f'basis_size {basis_size} exceeds the grid size {grid.n_points}')
    kinetic_symbol = 0.5 * (params.hbar_eff * grid.k) ** 2
    kinetic = scipy.linalg.circulant(np.fft.ifft(kinetic_symbol).real)
    hamiltonian = kinetic + np.diag(params.kappa * np.sqrt(1.0 + grid.x ** 2))
    energies, vectors = scipy.linalg.eigh(hamiltonian, subset_by_index=[0, basis_size - 1])
    vectors = vectors / math.sqrt(grid.dx)

    # deterministic sign: largest component positive
    peaks = np.argmax(np.abs(vectors), axis=0)
    vectors = vectors * np.sign(vectors[peaks, np.arange(basis_size)])
    overlap = grid.dx * np.sum(vectors * grid.reflect(vectors), axis=0)
    parity = np.where(overlap > 0, 1, -1)
    logger.debug(f'static basis: {basis_size} states, E in [{energies[0]:.6f}, {energies[-1]:.6f}]')
    return StaticBasis(grid, energies, vectors, parity)


@dataclass(frozen=True, eq=False)
class MonodromyBlock:
    parity: str
    indices: np.ndarray         # positions in the static basis
    matrix: np.ndarray          # unitary polar factor of the truncated one-period propagator
    raw_leakage: np.ndarray     # norm lost by projecting each propagated column onto the block
    snapshots: np.ndarray       # (n_phases, n_points, block size): propagated basis columns, or empty


def _guard_count(size: int, guard_fraction: float) -> int:
    return int(math.ceil(guard_fraction * size))


def _propagate_block(basis: StaticBasis, parity: str, params: SystemParams, config: PropagatorConfig,
                     settings: FloquetSettings, n_phases: int) -> MonodromyBlock:
    grid = basis.grid
    indices = basis.block(parity)
    columns = basis.vectors[:, indices].astype(complex)
    if n_phases:
        final, snapshots = propagate_period(columns, params, grid, config, settings.strobe_phase, n_phases)
    else:
        final = propagate_period(columns, params, grid, config, settings.strobe_phase)
        snapshots = np.empty((0,))

    cross = basis.coefficients(final, basis.block(ODD if parity == EVEN else EVEN))
    if cross.size and np.max(np.abs(cross)) > settings.cross_parity_tol:
        logger.warning(f'cross-parity monodromy elements up to {np.max(np.abs(cross)):.3g} in the {parity} block')

    raw = basis.coefficients(final, indices)
    leakage = np.real(grid.integrate(np.abs(final) ** 2)) - np.sum(np.abs(raw) ** 2, axis=0)
    checked = len(indices) - _guard_count(len(indices), settings.guard_fraction)
    worst = float(np.max(leakage[:checked])) if checked > 0 else 0.0
    if worst > settings.leak_tol:
        raise BasisTooSmall(f'{parity} block loses {worst:.3g} of a propagated column norm; increase basis_size')
    unitary, _ = scipy.linalg.polar(raw)
    logger.debug(f'{parity} monodromy block: {len(indices)} states, worst checked leakage {worst:.3g}')
    return MonodromyBlock(parity, indices, unitary, leakage, snapshots)


def monodromy_matrix(params: SystemParams, basis_size: int, grid: SpatialGrid, config: PropagatorConfig = None,
                     settings: FloquetSettings = None) -> np.ndarray:
    """
    One-period propagator in the static eigenbasis (basis order), unitary by construction
    :param params: system parameters; must be linear (u_nl = 0)
    :param basis_size: number of static eigenstates
    :param grid: spatial grid
    :param config: propagator configuration
    :param settings: Floquet settings (guard band, tolerances, strobe phase)
    :return: complex (basis_size, basis_size) matrix, zero between parity blocks
    """
    if params.u_nl != 0:
        raise ValueError('the monodromy matrix is only defined for u_nl = 0')
    config = config or PropagatorConfig()
    settings = settings or FloquetSettings(basis_size=basis_size)
    basis = static_basis(params, grid, basis_size)
    matrix = np.zeros((basis_size, basis_size), dtype=complex)
    for parity in (EVEN, ODD):
        block = _propagate_block(basis, parity, params, config, settings, 0)
        matrix[np.ix_(block.indices, block.indices)] = block.matrix
    return matrix


def _block_states(basis: StaticBasis, block: MonodromyBlock, params: SystemParams,
                  settings: FloquetSettings) -> [FloquetState]:
    hbar = params.hbar_eff
    schur_form, vectors = scipy.linalg.schur(block.matrix, output='complex')
    eigenvalues = np.diag(schur_form)
    phases = np.angle(eigenvalues)

    order = np.argsort(phases)
    gaps = np.diff(phases[order])
    wrap = 2 * np.pi - (phases[order][-1] - phases[order][0])
    if (gaps.size and np.min(gaps) < settings.degeneracy_tol) or (len(phases) > 1 and wrap < settings.degeneracy_tol):
        raise DegenerateUnresolved(f'degenerate eigenphases in the {block.parity} block')

    guard = _guard_count(len(block.indices), settings.guard_fraction)
    guard_weight = np.sum(np.abs(vectors[len(block.indices) - guard:, :]) ** 2, axis=0) if guard else \
        np.zeros(len(eigenvalues))
    energies = basis.energies[block.indices]

    states = []
    n_phases = block.snapshots.shape[0]
    times = np.arange(n_phases) * DRIVE_PERIOD / n_phases
    for j in range(len(eigenvalues)):
        if guard_weight[j] > settings.guard_weight_tol:
            continue
        lam = quasi_energy(eigenvalues[j], hbar)
        snaps = np.einsum('knm,m->kn', block.snapshots, vectors[:, j])
        snaps *= np.exp(1j * lam * times / hbar)[:, None]
        states.append(FloquetState(basis.grid, snaps, lam, block.parity, strobe_phase=settings.strobe_phase,
                                   hbar_eff=hbar, mean_energy=float(np.sum(np.abs(vectors[:, j]) ** 2 * energies))))
    return states


def floquet_spectrum(params: SystemParams, grid: SpatialGrid, config: PropagatorConfig = None,
                     settings: FloquetSettings = None) -> [FloquetState]:
    """
    Floquet states and quasi-energies of the linear problem
    :param params: system parameters (u_nl must be 0)
    :param grid: spatial grid
    :param config: propagator configuration
    :param settings: Floquet settings
    :return: FloquetStates sorted by quasi-energy, snapshots over one period
    """
    if params.u_nl != 0:
        raise ValueError('floquet_spectrum is only defined for u_nl = 0')
    config = config or PropagatorConfig()
    settings = settings or FloquetSettings()
    basis = static_basis(params, grid, settings.basis_size)
    states = []
    for parity in (EVEN, ODD):
        block = _propagate_block(basis, parity, params, config, settings, settings.n_phases)
        states.extend(_block_states(basis, block, params, settings))
    states.sort(key=lambda s: s.eigenvalue)
    logger.info(f'Floquet spectrum: {len(states)} states kept from a basis of {settings.basis_size}')
    return states


def spectrum_frame(spectrum: [FloquetState]) -> pd.DataFrame:
    return pd.DataFrame({
        'index': np.arange(len(spectrum)),
        'quasi_energy': [s.eigenvalue for s in spectrum],
        'parity': [s.parity for s in spectrum],
        'island_weight': [s.island_weight for s in spectrum],
        'mean_energy': [s.mean_energy for s in spectrum],
    })


def real_gauge(state: FloquetState) -> FloquetState:
    """
    Rotate the global phase so the phase-0 snapshot is as real as possible, largest component positive.
    Time-reversal symmetry of the cos(t) drive makes Floquet states real at phase 0 up to a phase.
    """
    phase0 = state.snapshots[0]
    theta = 0.5 * np.angle(np.sum(phase0 ** 2))
    rotated = state.with_phase(np.exp(-1j * theta))
    peak = np.argmax(np.abs(rotated.snapshots[0]))
    if rotated.snapshots[0][peak].real < 0:
        rotated = rotated.with_phase(-1.0)
    return rotated


def mean_momentum(amplitudes: np.ndarray, grid: SpatialGrid, hbar_eff: float) -> float:
    spectrum = np.abs(np.fft.fft(amplitudes)) ** 2
    return float(np.sum(grid.p(hbar_eff) * spectrum) / np.sum(spectrum))


def orient_doublet(even: FloquetState, odd: FloquetState, params: SystemParams, islands,
                   settings: FloquetSettings) -> (FloquetState, FloquetState):
    """
    Fix the doublet phases: both real at phase 0, and the sign of the odd member chosen so that
    (even + i odd) / sqrt(2) carries positive mean momentum (ties broken by the Husimi mass on I+).
    """
    even = real_gauge(even)
    odd = real_gauge(odd)
    plus, _ = island_superpositions(even, odd)
    p_mean = mean_momentum(plus[0], even.grid, params.hbar_eff)
    if abs(p_mean) > 1e-12:
        flip = p_mean < 0
    else:
        q = husimi(WaveFunction(even.grid, plus[0]), params, settings.husimi)
        radius = island_radius(islands[0].p_star, params.hbar_eff, settings.island_radius_factor,
                               settings.island_radius_hbar)
        m_plus, m_minus = island_mass(q, islands, radius)
        flip = m_minus > m_plus
    if flip:
        odd = odd.with_phase(-1.0)
    return even, odd


def island_weight(state: FloquetState, params: SystemParams, islands, settings: FloquetSettings) -> float:
    q = husimi(state.snapshot(0), params, settings.husimi)
    radius = island_radius(islands[0].p_star, params.hbar_eff, settings.island_radius_factor,
                           settings.island_radius_hbar)
    m_plus, m_minus = island_mass(q, islands, radius)
    return m_plus + m_minus


def make_doublet(even: FloquetState, odd: FloquetState, params: SystemParams, islands,
                 settings: FloquetSettings) -> TunnellingDoublet:
    """
    Orient an even/odd pair and re-express the odd quasi-energy so that lambda_e - lambda_o is the
    folded (small) splitting
    """
    hbar = params.hbar_eff
    window = 2.0 * np.pi * hbar / DRIVE_PERIOD
    splitting = fold_to_window(even.eigenvalue - odd.eigenvalue, window)
    odd = odd.with_eigenvalue(even.eigenvalue - splitting)
    even, odd = orient_doublet(even, odd, params, islands, settings)
    delta = abs(splitting)
    t_lin = 2.0 * np.pi * hbar / delta if delta > 0 else float('inf')
    return TunnellingDoublet(even, odd, delta, t_lin)


def identify_tunnelling_doublet(spectrum: [FloquetState], islands, params: SystemParams,
                                settings: FloquetSettings = None) -> (TunnellingDoublet, [FloquetState]):
    """
    Pick the even and odd Floquet states with the largest Husimi mass on the two islands
    :param spectrum: Floquet states from floquet_spectrum
    :param islands: (I+, I-) from the classical fixed-point finder
    :param params: system parameters
    :param settings: Floquet settings (island disk radius, weight threshold, Husimi lattice)
    :return: (doublet, spectrum with island weights filled in)
    """
    settings = settings or FloquetSettings()
    weighted = [s.with_island_weight(island_weight(s, params, islands, settings)) for s in spectrum]

    best = {}
    for parity in (EVEN, ODD):
        members = [s for s in weighted if s.parity == parity]
        if members:
            best[parity] = max(members, key=lambda s: s.island_weight)
    if len(best) < 2 or min(b.island_weight for b in best.values()) <= settings.weight_threshold:
        found = {k: round(v.island_weight, 4) for k, v in best.items()}
        raise DoubletNotFound(f'no even/odd pair above island weight {settings.weight_threshold} (best {found})')

    doublet = make_doublet(best[EVEN], best[ODD], params, islands, settings)
    logger.info(f'tunnelling doublet: weights {best[EVEN].island_weight:.3f}/{best[ODD].island_weight:.3f}, '
                f'delta lambda {doublet.delta_lambda:.6g}, T_lin {doublet.t_lin_periods:.2f} periods')
    return doublet, weighted
