"""
Husimi distributions Q(x0, p0) = |<alpha(x0, p0)|psi>|^2 / (2 pi hbar) and island masses.
"""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from dyntunnel.errors import GridMismatch
from dyntunnel.system import SystemParams, WaveFunction, coherent_width


@dataclass(frozen=True)
class LatticeSpec:
    x_range: (float, float) = (-8.0, 8.0)
    p_range: (float, float) = (-3.5, 3.5)
    nx: int = 128
    np_: int = 128

    def centers(self):
        return np.linspace(*self.x_range, self.nx), np.linspace(*self.p_range, self.np_)


@dataclass(frozen=True, eq=False)
class HusimiMap:
    x_centers: np.ndarray
    p_centers: np.ndarray
    values: np.ndarray      # (nx, np)
    hbar_eff: float
    sigma_x: float

    @property
    def cell_area(self) -> float:
        return float((self.x_centers[1] - self.x_centers[0]) * (self.p_centers[1] - self.p_centers[0]))

    def total(self) -> float:
        return float(np.sum(self.values) * self.cell_area)

    def reflected(self) -> 'HusimiMap':
        """
        The map under (x, p) -> (-x, -p); exact on lattices symmetric about the origin
        """
        return HusimiMap(-self.x_centers[::-1], -self.p_centers[::-1], self.values[::-1, ::-1],
                         self.hbar_eff, self.sigma_x)

    def to_frame(self) -> pd.DataFrame:
        """
        Matrix layout: one row per x center, one column per p center
        """
        frame = pd.DataFrame(self.values, index=self.x_centers, columns=self.p_centers)
        frame.index.name = 'x\\p'
        return frame


def husimi(psi: WaveFunction, params: SystemParams, lattice: LatticeSpec = None) -> HusimiMap:
    """
    Husimi function of psi on a rectangular lattice of coherent-state centers
    :param psi: unit-norm state
    :param params: system parameters (hbar_eff sets the coherent-state width)
    :param lattice: lattice of centers
    :return: HusimiMap
    """
    lattice = lattice or LatticeSpec()
    grid = psi.grid
    if lattice.x_range[0] < grid.x_min or lattice.x_range[1] > grid.x_max:
        raise GridMismatch(f'Husimi lattice {lattice.x_range} exceeds the grid box [{grid.x_min}, {grid.x_max}]')

    hbar = params.hbar_eff
    x = grid.x
    x0, p0 = lattice.centers()
    gauss = (np.pi * hbar) ** -0.25 * np.exp(-np.square(x[:, None] - x0[None, :]) / (2.0 * hbar))
    waves = np.exp(-1j * np.outer(p0, x) / hbar)
    overlaps = grid.dx * (waves @ (gauss * psi.amplitudes[:, None]))
    values = np.abs(overlaps.T) ** 2 / (2.0 * np.pi * hbar)
    return HusimiMap(x0, p0, values, hbar, coherent_width(params))


def island_radius(p_star: float, hbar_eff: float, factor: float = 0.5, hbar_factor: float = 2.2) -> float:
    """
    Disk radius for island masses: a fraction of |p*|, but never below a few coherent-state widths
    """
    return max(factor * abs(p_star), hbar_factor * math.sqrt(hbar_eff))


def island_mass(q: HusimiMap, islands, radius: float) -> (float, float):
    """
    Husimi mass inside disks of the given radius around I+ and I-
    :param q: Husimi map
    :param islands: (I+, I-) fixed points
    :param radius: disk radius in phase space
    :return: (m_plus, m_minus)
    """
    gx, gp = np.meshgrid(q.x_centers, q.p_centers, indexing='ij')
    masses = []
    for island in islands:
        inside = np.square(gx - island.x_star) + np.square(gp - island.p_star) <= radius ** 2
        masses.append(float(np.sum(q.values[inside]) * q.cell_area))
    return masses[0], masses[1]
