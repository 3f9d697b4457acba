"""
Classical motion in the driven well: x' = p, p' = -kappa [1 + epsilon cos t] x / sqrt(1 + x^2).

Integration uses the 4th-order triple-jump composition of the leapfrog scheme in extended phase space
(time advances with the drifts), with a fixed step so that stroboscopic times are hit exactly.
Everything is vectorized over arrays of phase points.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from dyntunnel.system import DRIVE_PERIOD, SystemParams, force
from dyntunnel.utils import check_finite

logger = logging.getLogger(__name__)

DEFAULT_STEPS_PER_PERIOD = 2048

_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = -2.0 ** (1.0 / 3.0) / (2.0 - 2.0 ** (1.0 / 3.0))

# (drift fraction, kick fraction, kick time offset) per stage; a final drift of _W1 / 2 closes the step
_STAGES = (
    (_W1 / 2.0, _W1, _W1 / 2.0),
    ((_W1 + _W0) / 2.0, _W0, 0.5),
    ((_W0 + _W1) / 2.0, _W1, 1.0 - _W1 / 2.0),
)
_LAST_DRIFT = _W1 / 2.0


@dataclass(frozen=True)
class PhasePoint:
    x: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        check_finite([self.x, self.p, self.t], 'phase point')


def force_gradient(x, t, params: SystemParams):
    """
    d(force)/dx, used by the tangent map
    """
    return -params.drive_factor(t) / (1.0 + np.square(x)) ** 1.5


class ClassicalIntegrator:
    params: SystemParams
    dt: float

    def __init__(self, params: SystemParams, steps_per_period: int = DEFAULT_STEPS_PER_PERIOD):
        self.params = params
        self.steps_per_period = steps_per_period
        self.dt = DRIVE_PERIOD / steps_per_period

    def advance(self, x, p, t0: float, n_steps: int, dt: float = None, tangent=None):
        """
        Advance arrays of phase points by n_steps fixed steps.  A negative dt integrates backwards.
        :param x: positions
        :param p: momenta
        :param t0: start time, shared by all points
        :param n_steps: number of steps
        :param dt: step, defaults to the integrator step
        :param tangent: optional (dx, dp) tangent vectors advanced with the linearized flow
        :return: (x, p) or (x, p, (dx, dp)) at t0 + n_steps dt
        """
        dt = self.dt if dt is None else dt
        x = np.array(x, dtype=float, copy=True)
        p = np.array(p, dtype=float, copy=True)
        if tangent is not None:
            dx, dp = (np.array(v, dtype=float, copy=True) for v in tangent)

        for j in range(n_steps):
            t_step = t0 + j * dt
            for drift, kick, offset in _STAGES:
                x += drift * dt * p
                if tangent is not None:
                    dx += drift * dt * dp
                    dp += kick * dt * force_gradient(x, t_step + offset * dt, self.params) * dx
                p += kick * dt * force(x, t_step + offset * dt, self.params)
            x += _LAST_DRIFT * dt * p
            if tangent is not None:
                dx += _LAST_DRIFT * dt * dp

        if tangent is not None:
            return x, p, (dx, dp)
        return x, p


def integrate_classical(start: PhasePoint, duration: float, params: SystemParams,
                        steps_per_period: int = DEFAULT_STEPS_PER_PERIOD) -> PhasePoint:
    """
    Integrate Hamilton's equations from start for the given duration
    :param start: initial phase point
    :param duration: non-negative time span
    :param params: system parameters
    :param steps_per_period: integrator resolution; the step is shrunk so it divides duration
    :return: the phase point at start.t + duration
    """
    if duration < 0:
        raise ValueError(f'duration must be >= 0, got {duration}')
    integrator = ClassicalIntegrator(params, steps_per_period)
    n_steps = int(math.ceil(duration / integrator.dt - 1e-9))
    if n_steps == 0:
        return start
    x, p = integrator.advance(start.x, start.p, start.t, n_steps, dt=duration / n_steps)
    return PhasePoint(float(x), float(p), start.t + duration)


class StroboscopicMap:
    """
    The map advancing phase points by one drive period from the strobe phase
    """

    def __init__(self, params: SystemParams, strobe_phase: float = 0.0,
                 steps_per_period: int = DEFAULT_STEPS_PER_PERIOD):
        self.params = params
        self.strobe_phase = strobe_phase
        self.integrator = ClassicalIntegrator(params, steps_per_period)

    def __call__(self, x, p, n_periods: int = 1):
        steps = self.integrator.steps_per_period
        for _ in range(n_periods):
            x, p = self.integrator.advance(x, p, self.strobe_phase, steps)
        return x, p

    def jacobian(self, x, p, h: float = 1e-6):
        """
        Central finite-difference Jacobian of the map at arrays of points
        :return: array of shape (..., 2, 2)
        """
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        xs = np.concatenate([x + h, x - h, x, x])
        ps = np.concatenate([p, p, p + h, p - h])
        mx, mp = self(xs, ps)
        mx = mx.reshape(4, *x.shape)
        mp = mp.reshape(4, *x.shape)
        jac = np.empty(x.shape + (2, 2))
        jac[..., 0, 0] = (mx[0] - mx[1]) / (2 * h)
        jac[..., 1, 0] = (mp[0] - mp[1]) / (2 * h)
        jac[..., 0, 1] = (mx[2] - mx[3]) / (2 * h)
        jac[..., 1, 1] = (mp[2] - mp[3]) / (2 * h)
        return jac


@dataclass(frozen=True, eq=False)
class PoincareSection:
    trajectories: np.ndarray    # (n_seeds, n_periods, 2): x and p at strobe_phase + 2 pi n, n = 1..n_periods
    params: SystemParams
    strobe_phase: float

    def to_frame(self) -> pd.DataFrame:
        n_seeds, n_periods, _ = self.trajectories.shape
        return pd.DataFrame({
            'seed_id': np.repeat(np.arange(n_seeds), n_periods),
            'n': np.tile(np.arange(1, n_periods + 1), n_seeds),
            'x': self.trajectories[:, :, 0].ravel(),
            'p': self.trajectories[:, :, 1].ravel(),
        })


def _section_chunk(x, p, n_periods, params, strobe_phase, steps_per_period):
    smap = StroboscopicMap(params, strobe_phase, steps_per_period)
    out = np.empty((len(x), n_periods, 2))
    for n in range(n_periods):
        x, p = smap(x, p)
        out[:, n, 0] = x
        out[:, n, 1] = p
    return check_finite(out, 'Poincare section')


def split_chunks(n_items: int, n_jobs: int):
    """
    Static partition of range(n_items) into at most n_jobs contiguous slices
    """
    bounds = np.linspace(0, n_items, max(1, min(n_jobs, n_items)) + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def poincare_section(seeds: [PhasePoint], n_periods: int, params: SystemParams, strobe_phase: float = 0.0,
                     steps_per_period: int = DEFAULT_STEPS_PER_PERIOD, n_jobs: int = 1) -> PoincareSection:
    """
    Stroboscopic section of the trajectories started from seeds at the strobe phase
    :param seeds: initial points (their x, p are taken at t = strobe_phase)
    :param n_periods: number of strobe points per seed
    :param params: system parameters
    :param strobe_phase: sampling phase in [0, 2 pi)
    :param steps_per_period: integrator resolution
    :param n_jobs: joblib workers over contiguous seed chunks
    :return: PoincareSection
    """
    if n_periods < 1:
        raise ValueError(f'n_periods must be >= 1, got {n_periods}')
    x = np.array([s.x for s in seeds], dtype=float)
    p = np.array([s.p for s in seeds], dtype=float)
    chunks = split_chunks(len(seeds), n_jobs)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_section_chunk)(x[c], p[c], n_periods, params, strobe_phase, steps_per_period) for c in chunks)
    logger.debug(f'Poincare section: {len(seeds)} seeds x {n_periods} periods')
    return PoincareSection(np.concatenate(parts, axis=0), params, strobe_phase)


def seed_lattice(x_range: (float, float), p_range: (float, float), nx: int, np_: int,
                 rng: np.random.Generator = None) -> [PhasePoint]:
    """
    Regular nx x np_ lattice of seeds; with rng each seed is jittered uniformly inside its cell
    """
    xs = np.linspace(*x_range, nx)
    ps = np.linspace(*p_range, np_)
    gx, gp = np.meshgrid(xs, ps, indexing='ij')
    gx, gp = gx.ravel(), gp.ravel()
    if rng is not None:
        cell_x = (x_range[1] - x_range[0]) / max(nx - 1, 1)
        cell_p = (p_range[1] - p_range[0]) / max(np_ - 1, 1)
        gx = gx + cell_x * (rng.random(gx.shape) - 0.5)
        gp = gp + cell_p * (rng.random(gp.shape) - 0.5)
    return [PhasePoint(float(a), float(b)) for a, b in zip(gx, gp)]


def lyapunov_indicator(x, p, params: SystemParams, n_periods: int = 200,
                       steps_per_period: int = DEFAULT_STEPS_PER_PERIOD):
    """
    Finite-time growth rate (per period) of tangent vectors, measured over the second half of the
    window so that the linear shear growth on regular tori does not count as chaos.
    :return: array of growth rates, one per point
    """
    integrator = ClassicalIntegrator(params, steps_per_period)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    dx = np.ones_like(x)
    dp = np.zeros_like(p)
    log_growth = np.zeros_like(x)
    half = n_periods // 2
    log_at_half = np.zeros_like(x)
    for n in range(n_periods):
        x, p, (dx, dp) = integrator.advance(x, p, 0.0, integrator.steps_per_period, tangent=(dx, dp))
        length = np.hypot(dx, dp)
        log_growth += np.log(length)
        dx /= length
        dp /= length
        if n + 1 == half:
            log_at_half = log_growth.copy()
    return (log_growth - log_at_half) / (n_periods - half)


def chaotic_fraction(seeds: [PhasePoint], params: SystemParams, n_periods: int = 200, threshold: float = 1e-2,
                     steps_per_period: int = DEFAULT_STEPS_PER_PERIOD, n_jobs: int = 1) -> float:
    """
    Fraction of seeds whose Lyapunov indicator exceeds the threshold
    """
    x = np.array([s.x for s in seeds], dtype=float)
    p = np.array([s.p for s in seeds], dtype=float)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(lyapunov_indicator)(x[c], p[c], params, n_periods, steps_per_period)
        for c in split_chunks(len(seeds), n_jobs))
    rates = np.concatenate(parts)
    return float(np.mean(rates > threshold))
