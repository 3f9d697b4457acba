"""
Period-one fixed points of the stroboscopic map: the centers of the islands I+ and I-.
"""
import logging
from dataclasses import dataclass

import numpy as np

from dyntunnel.classical.dynamics import DEFAULT_STEPS_PER_PERIOD, StroboscopicMap
from dyntunnel.errors import NoConvergence, NotElliptic
from dyntunnel.system import SystemParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IslandFixedPoint:
    x_star: float
    p_star: float
    stability: float    # trace of the 2x2 monodromy Jacobian
    sign: int           # +1 for I+, -1 for I-

    @property
    def is_elliptic(self) -> bool:
        return abs(self.stability) < 2.0


@dataclass(frozen=True)
class NewtonSettings:
    x_range: (float, float) = (-6.0, 6.0)
    p_range: (float, float) = (-3.0, 3.0)
    n_seeds: int = 32
    max_iter: int = 40
    tol: float = 1e-10
    max_step: float = 0.5
    dedup_tol: float = 1e-5
    fd_step: float = 1e-6
    p_min: float = 0.05
    elliptic_margin: float = 1e-6
    mirror_tol: float = 1e-6


def newton_fixed_points(smap: StroboscopicMap, x0, p0, settings: NewtonSettings):
    """
    Damped Newton iteration on F(x, p) = M(x, p) - (x, p), run for all seeds at once.  Steps are
    clipped to settings.max_step; seeds leaving twice the seed window are dropped.
    :return: (x, p, converged mask)
    """
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    active = np.ones(x.shape, dtype=bool)
    converged = np.zeros(x.shape, dtype=bool)
    x_lim = 2 * max(abs(v) for v in settings.x_range)
    p_lim = 2 * max(abs(v) for v in settings.p_range)

    for it in range(settings.max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa, pa = x[idx], p[idx]
        mx, mp = smap(xa, pa)
        fx, fp = mx - xa, mp - pa
        done = np.hypot(fx, fp) < settings.tol
        converged[idx[done]] = True
        active[idx[done]] = False

        keep = ~done
        idx, xa, pa, fx, fp = idx[keep], xa[keep], pa[keep], fx[keep], fp[keep]
        if idx.size == 0:
            break
        jac = smap.jacobian(xa, pa, settings.fd_step)
        a = jac[:, 0, 0] - 1.0
        b = jac[:, 0, 1]
        c = jac[:, 1, 0]
        d = jac[:, 1, 1] - 1.0
        det = a * d - b * c
        singular = np.abs(det) < 1e-14
        det = np.where(singular, 1.0, det)
        step_x = -(d * fx - b * fp) / det
        step_p = -(-c * fx + a * fp) / det
        length = np.hypot(step_x, step_p)
        scale = np.minimum(1.0, settings.max_step / np.maximum(length, 1e-300))
        x[idx] = xa + scale * step_x
        p[idx] = pa + scale * step_p

        lost = singular | (np.abs(x[idx]) > x_lim) | (np.abs(p[idx]) > p_lim) | ~np.isfinite(x[idx] + p[idx])
        active[idx[lost]] = False
        logger.debug(f'Newton iteration {it}: {active.sum()} active, {converged.sum()} converged')

    return x, p, converged


def deduplicate(x, p, tol: float):
    roots = []
    for xi, pi in zip(x, p):
        if not any(abs(xi - xr) < tol and abs(pi - pr) < tol for xr, pr in roots):
            roots.append((float(xi), float(pi)))
    return roots


def find_period_one_islands(params: SystemParams, strobe_phase: float = 0.0,
                            settings: NewtonSettings = None,
                            steps_per_period: int = DEFAULT_STEPS_PER_PERIOD) -> (IslandFixedPoint, IslandFixedPoint):
    """
    Locate the elliptic period-one fixed points I+ (p > 0) and I- (p < 0)
    :param params: system parameters
    :param strobe_phase: phase of the stroboscopic map
    :param settings: Newton seeding and tolerances
    :param steps_per_period: integrator resolution
    :return: (I+, I-)
    """
    settings = settings or NewtonSettings()
    smap = StroboscopicMap(params, strobe_phase, steps_per_period)

    xs = np.linspace(*settings.x_range, settings.n_seeds)
    ps = np.linspace(*settings.p_range, settings.n_seeds)
    gx, gp = np.meshgrid(xs, ps, indexing='ij')
    x, p, ok = newton_fixed_points(smap, gx.ravel(), gp.ravel(), settings)

    roots = [r for r in deduplicate(x[ok], p[ok], settings.dedup_tol) if abs(r[1]) > settings.p_min]
    if not roots:
        raise NoConvergence(f'no period-one fixed point with p != 0 found for {params}')

    rx = np.array([r[0] for r in roots])
    rp = np.array([r[1] for r in roots])
    traces = np.trace(smap.jacobian(rx, rp, settings.fd_step), axis1=-2, axis2=-1)
    elliptic = np.abs(traces) < 2.0 - settings.elliptic_margin
    logger.info(f'{len(roots)} period-one points with p != 0, {int(elliptic.sum())} elliptic')

    upper = np.flatnonzero(elliptic & (rp > 0))
    if upper.size == 0:
        raise NotElliptic(f'no elliptic period-one point with p > 0 (traces {np.round(traces, 8).tolist()})')

    # island closest to the x = 0 axis, then the fastest one
    best = min(upper, key=lambda i: (round(abs(rx[i]), 6), -rp[i]))
    plus = IslandFixedPoint(float(rx[best]), float(rp[best]), float(traces[best]), +1)

    # I- is the parity image; polish it with Newton rather than trusting the lattice
    mx, mp, mok = newton_fixed_points(smap, np.array([-plus.x_star]), np.array([-plus.p_star]), settings)
    if not mok[0]:
        raise NoConvergence('Newton failed on the parity image of I+')
    minus_trace = float(np.trace(smap.jacobian(mx, mp, settings.fd_step)[0]))
    minus = IslandFixedPoint(float(mx[0]), float(mp[0]), minus_trace, -1)

    if abs(minus.x_star + plus.x_star) > settings.mirror_tol or abs(minus.p_star + plus.p_star) > settings.mirror_tol:
        raise NoConvergence(f'I- {minus} is not the parity image of I+ {plus}')
    if abs(minus_trace) >= 2.0 - settings.elliptic_margin:
        raise NotElliptic(f'I- has trace {minus_trace}')

    logger.info(f'I+ at (x, p) = ({plus.x_star:.6f}, {plus.p_star:.6f}), trace {plus.stability:.6f}')
    return plus, minus
