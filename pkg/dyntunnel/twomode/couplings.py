"""
Overlap coefficients of a Floquet doublet and the parameters of the effective two-mode Hamiltonian

    U_ij(t) = U int |phi_i|^2 |phi_j|^2 dx,    A_eo(t) = U int phi_e^2 conj(phi_o)^2 dx
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from dyntunnel.errors import PhaseMismatch
from dyntunnel.quantum.floquet import FloquetState
from dyntunnel.system import DRIVE_PERIOD

logger = logging.getLogger(__name__)

LINEAR = 'linear'
NONLINEAR = 'nonlinear'
SYNTHETIC = 'synthetic'


def period_average(samples: np.ndarray) -> complex:
    """
    Trapezoid average over one period of equally spaced periodic samples t_k = k T / n
    """
    closed = np.append(samples, samples[0])
    times = np.linspace(0.0, DRIVE_PERIOD, len(closed))
    return trapezoid(closed, times) / DRIVE_PERIOD


@dataclass(frozen=True, eq=False)
class CouplingCoefficients:
    u_ee: np.ndarray
    u_oo: np.ndarray
    u_eo: np.ndarray
    a_eo: np.ndarray
    e_bar: float
    delta_e: float
    hbar_eff: float
    u_nl: float
    source: str = LINEAR

    @property
    def n_samples(self) -> int:
        return len(self.u_ee)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * DRIVE_PERIOD / self.n_samples

    @property
    def u_ee_bar(self) -> float:
        return float(np.real(period_average(self.u_ee)))

    @property
    def u_oo_bar(self) -> float:
        return float(np.real(period_average(self.u_oo)))

    @property
    def u_eo_bar(self) -> float:
        return float(np.real(period_average(self.u_eo)))

    @property
    def a_eo_bar(self) -> complex:
        return complex(period_average(self.a_eo))

    def scaled(self, factor: float) -> 'CouplingCoefficients':
        """
        Couplings of the same (frozen) states at factor times the nonlinearity
        """
        return replace(self, u_ee=self.u_ee * factor, u_oo=self.u_oo * factor, u_eo=self.u_eo * factor,
                       a_eo=self.a_eo * factor, u_nl=self.u_nl * factor)

    def averaged(self) -> 'CouplingCoefficients':
        return replace(self, u_ee=np.array([self.u_ee_bar]), u_oo=np.array([self.u_oo_bar]),
                       u_eo=np.array([self.u_eo_bar]), a_eo=np.array([self.a_eo_bar]))

    @classmethod
    def from_effective(cls, lambda_cap: float, alpha: float, beta: float, hbar_eff: float = 1.0,
                       e_bar: float = 0.0) -> 'CouplingCoefficients':
        """
        Constant couplings with the given effective parameters, u_ee = u_oo and real A_eo.  The free
        choice of u_eo keeps every u_ij positive and |A_eo| below u_ee.
        """
        a = (lambda_cap + 2.0 * beta) / 2.0
        v = 2.0 * abs(lambda_cap) + 3.0 * abs(a) + 1.0
        u = 2.0 * (lambda_cap - 1.5 * a + v)
        return cls(np.array([u]), np.array([u]), np.array([v]), np.array([complex(a)]),
                   e_bar, -alpha, hbar_eff, 1.0, SYNTHETIC)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            't': self.times,
            'u_ee': self.u_ee,
            'u_oo': self.u_oo,
            'u_eo': self.u_eo,
            'a_eo_re': np.real(self.a_eo),
            'a_eo_im': np.imag(self.a_eo),
        })


def compute_couplings(phi_e: FloquetState, phi_o: FloquetState, u_nl: float, n_time_samples: int = None,
                      source: str = None) -> CouplingCoefficients:
    """
    Overlap coefficients at each stored drive phase
    :param phi_e: even member, snapshots over one period
    :param phi_o: odd member, sampled at the same phases
    :param u_nl: the prefactor U (1 gives the U-independent overlaps)
    :param n_time_samples: use every (n_phases / n_time_samples)-th stored phase; default all of them
    :param source: linear or nonlinear; guessed from u_nl when omitted
    :return: CouplingCoefficients
    """
    phi_e.grid.check_same(phi_o.grid)
    if phi_e.n_phases != phi_o.n_phases or abs(phi_e.strobe_phase - phi_o.strobe_phase) > 1e-12:
        raise PhaseMismatch(f'doublet members sampled differently: {phi_e.n_phases} phases from '
                            f'{phi_e.strobe_phase} vs {phi_o.n_phases} from {phi_o.strobe_phase}')
    n_time_samples = n_time_samples or phi_e.n_phases
    if phi_e.n_phases % n_time_samples:
        raise ValueError(f'n_time_samples={n_time_samples} must divide n_phases={phi_e.n_phases}')
    stride = phi_e.n_phases // n_time_samples

    grid = phi_e.grid
    even = phi_e.snapshots[::stride].T
    odd = phi_o.snapshots[::stride].T
    dens_e = np.abs(even) ** 2
    dens_o = np.abs(odd) ** 2
    coeffs = CouplingCoefficients(
        u_ee=u_nl * grid.integrate(dens_e * dens_e),
        u_oo=u_nl * grid.integrate(dens_o * dens_o),
        u_eo=u_nl * grid.integrate(dens_e * dens_o),
        a_eo=u_nl * grid.integrate(even ** 2 * np.conj(odd) ** 2),
        e_bar=0.5 * (phi_e.eigenvalue + phi_o.eigenvalue),
        delta_e=phi_e.eigenvalue - phi_o.eigenvalue,
        hbar_eff=phi_e.hbar_eff,
        u_nl=u_nl,
        source=source or (LINEAR if u_nl == 1.0 else NONLINEAR),
    )
    a_bar = coeffs.a_eo_bar
    if abs(a_bar.imag) >= 1e-6 * abs(a_bar) + 1e-10:
        logger.warning(f'period-averaged A_eo has an imaginary part {a_bar.imag:.3g} (|A_eo| = {abs(a_bar):.3g})')
    return coeffs


@dataclass(frozen=True)
class EffectiveHamiltonianParams:
    lambda_cap: float
    alpha: float
    beta: float
    lambda0: float

    @staticmethod
    def zeta(z):
        return 1.0 - np.square(z)

    @property
    def ratio(self) -> float:
        """
        |Lambda / 2 alpha|, the trapping ratio for small beta
        """
        if self.alpha == 0:
            return float('inf') if self.lambda_cap else 0.0
        return abs(self.lambda_cap / (2.0 * self.alpha))


def effective_params(coeffs: CouplingCoefficients) -> EffectiveHamiltonianParams:
    u_ee, u_oo, u_eo = coeffs.u_ee_bar, coeffs.u_oo_bar, coeffs.u_eo_bar
    a_re = coeffs.a_eo_bar.real
    lambda_cap = (u_ee + u_oo) / 4.0 + 1.5 * a_re - u_eo
    alpha = (u_ee - u_oo) / 2.0 - coeffs.delta_e
    beta = u_eo / 2.0 - (u_ee + u_oo) / 8.0 + a_re / 4.0
    lambda0 = lambda_cap / coeffs.u_nl if coeffs.u_nl else float('nan')
    return EffectiveHamiltonianParams(lambda_cap, alpha, beta, lambda0)
