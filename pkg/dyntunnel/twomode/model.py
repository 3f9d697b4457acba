"""
Coupled-mode equations for the amplitudes of the island modes phi+- = (phi_e +- i phi_o) / sqrt(2),
and their equivalent form in the even/odd basis.
"""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from dyntunnel.errors import ToleranceFailure
from dyntunnel.system import DRIVE_PERIOD
from dyntunnel.twomode.couplings import CouplingCoefficients, EffectiveHamiltonianParams

AVERAGED = 'averaged'
TIME_DEPENDENT = 'time-dependent'
PLUS_MINUS = 'plus_minus'
EVEN_ODD = 'even_odd'

SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class TwoModeState:
    c_plus: complex
    c_minus: complex

    @property
    def z(self) -> float:
        return abs(self.c_plus) ** 2 - abs(self.c_minus) ** 2

    @property
    def varphi(self) -> float:
        return float(np.angle(self.c_minus) - np.angle(self.c_plus))

    @property
    def norm(self) -> float:
        return abs(self.c_plus) ** 2 + abs(self.c_minus) ** 2

    @classmethod
    def from_z_phi(cls, z: float, varphi: float) -> 'TwoModeState':
        if not -1.0 <= z <= 1.0:
            raise ValueError(f'z must lie in [-1, 1], got {z}')
        return cls(complex(math.sqrt((1.0 + z) / 2.0)), math.sqrt((1.0 - z) / 2.0) * np.exp(1j * varphi))

    def even_odd(self) -> (complex, complex):
        return to_even_odd(self.c_plus, self.c_minus)


def to_even_odd(c_plus, c_minus):
    return SQRT_HALF * (c_plus + c_minus), 1j * SQRT_HALF * (c_plus - c_minus)


def to_plus_minus(c_e, c_o):
    return SQRT_HALF * (c_e - 1j * c_o), SQRT_HALF * (c_e + 1j * c_o)


class PeriodicInterpolant:
    """
    Trigonometric interpolation of equally spaced samples of a T-periodic function
    """

    def __init__(self, samples: np.ndarray):
        samples = np.asarray(samples)
        n = len(samples)
        self.coefficients = np.fft.fft(samples) / n
        self.harmonics = np.fft.fftfreq(n, d=1.0 / n)
        self.nyquist = n % 2 == 0 and n > 1
        self.is_real = not np.iscomplexobj(samples)

    def __call__(self, t: float):
        omega_t = 2.0 * np.pi * t / DRIVE_PERIOD
        terms = self.coefficients * np.exp(1j * self.harmonics * omega_t)
        if self.nyquist:
            # split the Nyquist term between +-n/2
            k = len(self.coefficients) // 2
            terms[k] = self.coefficients[k] * np.cos(self.harmonics[k] * omega_t)
        value = np.sum(terms)
        return value.real if self.is_real else value


class CouplingSchedule:
    """
    (u_ee, u_oo, u_eo, a_eo) as functions of time, either constant averages or interpolated samples
    """

    def __init__(self, coeffs: CouplingCoefficients, mode: str):
        if mode not in (AVERAGED, TIME_DEPENDENT):
            raise ValueError(f'mode must be {AVERAGED} or {TIME_DEPENDENT}, got {mode}')
        self.mode = mode
        if mode == AVERAGED:
            self.constant = (coeffs.u_ee_bar, coeffs.u_oo_bar, coeffs.u_eo_bar, coeffs.a_eo_bar)
        else:
            self.constant = None
            self.series = [PeriodicInterpolant(np.real(coeffs.u_ee)), PeriodicInterpolant(np.real(coeffs.u_oo)),
                           PeriodicInterpolant(np.real(coeffs.u_eo)), PeriodicInterpolant(np.asarray(coeffs.a_eo))]

    def __call__(self, t: float):
        if self.constant is not None:
            return self.constant
        return tuple(f(t) for f in self.series)


def plus_minus_rhs(t: float, c: np.ndarray, coeffs: CouplingCoefficients, schedule: CouplingSchedule) -> np.ndarray:
    """
    d/dt (c+, c-) from the six-term coupled-mode equations
    """
    u_ee, u_oo, u_eo, a_eo = schedule(t)
    a_re, a_im = a_eo.real, a_eo.imag
    self_term = u_eo - a_re / 2.0 - u_ee / 4.0 - u_oo / 4.0
    pair_term = u_ee / 4.0 + u_oo / 4.0 - u_eo - a_re / 2.0
    out = np.empty(2, dtype=complex)
    for i in (0, 1):
        cs, co = c[i], c[1 - i]
        ns, no = abs(cs) ** 2, abs(co) ** 2
        out[i] = (coeffs.e_bar * cs + coeffs.delta_e * co / 2.0
                  + a_re * no * cs - 1j * a_im * ns * co
                  + self_term * ns * cs
                  + (1j * a_im / 2.0 - (u_ee - u_oo) / 4.0) * no * co
                  + pair_term * co ** 2 * np.conj(cs)
                  + (1j * a_im / 2.0 + (u_ee - u_oo) / 4.0) * cs ** 2 * np.conj(co))
    return -1j * out / coeffs.hbar_eff


def even_odd_rhs(t: float, c: np.ndarray, coeffs: CouplingCoefficients, schedule: CouplingSchedule) -> np.ndarray:
    """
    d/dt (c_e, c_o): the same dynamics before the change to the island basis, written with |c_e|^2 + |c_o|^2 = 1
    """
    u_ee, u_oo, u_eo, a_eo = schedule(t)
    c_e, c_o = c
    e_e = coeffs.e_bar + coeffs.delta_e / 2.0
    e_o = coeffs.e_bar - coeffs.delta_e / 2.0
    out = np.array([
        e_e * c_e + (2.0 * u_eo - u_ee) * abs(c_o) ** 2 * c_e + np.conj(a_eo) * c_o ** 2 * np.conj(c_e),
        e_o * c_o + (2.0 * u_eo - u_oo) * abs(c_e) ** 2 * c_o + a_eo * c_e ** 2 * np.conj(c_o),
    ])
    return -1j * out / coeffs.hbar_eff


@dataclass(frozen=True, eq=False)
class TwoModeTrajectory:
    times: np.ndarray
    c_plus: np.ndarray
    c_minus: np.ndarray

    @property
    def periods(self) -> np.ndarray:
        return self.times / DRIVE_PERIOD

    @property
    def n_plus(self) -> np.ndarray:
        return np.abs(self.c_plus) ** 2

    @property
    def n_minus(self) -> np.ndarray:
        return np.abs(self.c_minus) ** 2

    @property
    def z(self) -> np.ndarray:
        return self.n_plus - self.n_minus

    @property
    def varphi(self) -> np.ndarray:
        return np.angle(self.c_minus) - np.angle(self.c_plus)

    @property
    def norm(self) -> np.ndarray:
        return self.n_plus + self.n_minus

    def state(self, i: int) -> TwoModeState:
        return TwoModeState(complex(self.c_plus[i]), complex(self.c_minus[i]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'period': self.periods, 'n_plus': self.n_plus, 'n_minus': self.n_minus,
                             'z': self.z, 'varphi': self.varphi})


def integrate_two_mode(initial: TwoModeState, coeffs: CouplingCoefficients, mode: str = AVERAGED,
                       n_periods: float = 1500, samples_per_period: int = 1, basis: str = PLUS_MINUS,
                       rtol: float = 1e-10, atol: float = 1e-10) -> TwoModeTrajectory:
    """
    Integrate the coupled-mode equations from an initial state with an adaptive 8th order Runge-Kutta scheme
    :param initial: normalized (c+, c-)
    :param coeffs: coupling coefficients of the doublet
    :param mode: averaged (constant period averages) or time-dependent (interpolated samples)
    :param n_periods: duration in drive periods
    :param samples_per_period: output samples per drive period
    :param basis: plus_minus, or even_odd to integrate the even/odd form and convert back
    :param rtol: relative tolerance of the step control
    :param atol: absolute tolerance of the step control
    :return: TwoModeTrajectory sampled at t = k T / samples_per_period
    """
    if abs(initial.norm - 1.0) > 1e-12:
        raise ValueError(f'initial state must be normalized, got norm {initial.norm}')
    schedule = CouplingSchedule(coeffs, mode)
    if basis == PLUS_MINUS:
        rhs = plus_minus_rhs
        y0 = np.array([initial.c_plus, initial.c_minus], dtype=complex)
    elif basis == EVEN_ODD:
        rhs = even_odd_rhs
        y0 = np.array(initial.even_odd(), dtype=complex)
    else:
        raise ValueError(f'unknown basis {basis}')

    t_end = n_periods * DRIVE_PERIOD
    n_out = int(round(n_periods * samples_per_period))
    t_eval = np.linspace(0.0, t_end, n_out + 1)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method='DOP853', t_eval=t_eval, rtol=rtol, atol=atol,
                    args=(coeffs, schedule))
    if not sol.success:
        raise ToleranceFailure(f'two-mode integration failed at rtol={rtol}: {sol.message}')

    first, second = sol.y
    if basis == EVEN_ODD:
        first, second = to_plus_minus(first, second)
    return TwoModeTrajectory(sol.t, first, second)


def h_eff(z, varphi, params: EffectiveHamiltonianParams):
    """
    Effective Hamiltonian in the (z, varphi) chart
    """
    zeta = params.zeta(z)
    return (params.lambda_cap / 2.0 * (1.0 - zeta) + params.alpha * np.sqrt(zeta) * np.cos(varphi)
            + params.beta * zeta * np.cos(2.0 * varphi))
