"""
Tunnelling periods and verdicts from stroboscopic series: population imbalance z(nT) or mean momentum <p>(nT).
"""
import logging
from dataclasses import dataclass

import numpy as np

from dyntunnel.errors import SeriesTooShort

logger = logging.getLogger(__name__)

TUNNELLING = 'tunnelling'
TRAPPED = 'trapped'
MARGINAL = 'marginal'

MIN_SAMPLES = 4
REFINE_MIN_PERIODS = 4
REFINE_WINDOW = 0.25
ZERO_PADDING = 8


@dataclass(frozen=True, eq=False)
class PeriodExtraction:
    classification: str
    period: float       # drive periods; None unless tunnelling
    crossings: np.ndarray
    floor: float        # min |s| / |s(0)|

    @property
    def is_tunnelling(self) -> bool:
        return self.classification == TUNNELLING


def zero_crossings(series: np.ndarray) -> np.ndarray:
    """
    Sign changes of the series, located by linear interpolation between samples
    """
    s = np.asarray(series, dtype=float)
    left, right = s[:-1], s[1:]
    idx = np.flatnonzero(((left * right) < 0) | ((right == 0) & (left != 0)))
    return idx + left[idx] / (left[idx] - right[idx])


def refine_period(series: np.ndarray, estimate: float) -> float:
    """
    Dominant period of the mean-removed series, searched within +-25% of the estimate on a zero-padded
    periodogram, with a parabolic fit through the peak bin and its neighbours
    """
    s = np.asarray(series, dtype=float)
    s = s - np.mean(s)
    n_fft = ZERO_PADDING * int(2 ** np.ceil(np.log2(len(s))))
    power = np.abs(np.fft.rfft(s, n_fft)) ** 2
    freqs = np.fft.rfftfreq(n_fft)
    window = np.flatnonzero((freqs >= 1.0 / ((1 + REFINE_WINDOW) * estimate)) &
                            (freqs <= 1.0 / ((1 - REFINE_WINDOW) * estimate)))
    if window.size < 3:
        return estimate
    k = window[np.argmax(power[window])]
    if k in (window[0], window[-1]):
        return estimate
    left, mid, right = power[k - 1], power[k], power[k + 1]
    denom = left - 2 * mid + right
    shift = 0.5 * (left - right) / denom if denom != 0 else 0.0
    peak = (k + shift) / n_fft
    return 1.0 / peak if peak > 0 else estimate


def extract_tunnelling_period(series, trap_floor: float = 0.1, refine: bool = True) -> PeriodExtraction:
    """
    Classify a stroboscopic series and measure its reversal period
    :param series: z(nT) or <p>(nT), one sample per drive period starting at an extremum
    :param trap_floor: a series without sign change is trapped if min |s| / |s(0)| exceeds this
    :param refine: refine the crossing estimate spectrally when the series covers enough periods
    :return: PeriodExtraction
    """
    s = np.asarray(series, dtype=float)
    if len(s) < MIN_SAMPLES:
        raise SeriesTooShort(f'{len(s)} samples; at least {MIN_SAMPLES} are needed')

    scale = abs(s[0]) or float(np.max(np.abs(s)))
    floor = float(np.min(np.abs(s)) / scale) if scale else 0.0
    crossings = zero_crossings(s)

    if crossings.size == 0:
        classification = TRAPPED if floor > trap_floor else MARGINAL
        logger.debug(f'no sign change: {classification} (floor {floor:.3f})')
        return PeriodExtraction(classification, None, crossings, floor)

    if crossings.size >= 2:
        period = 2.0 * float(np.mean(np.diff(crossings)))
    else:
        period = 4.0 * float(crossings[0])
    if refine and period > 0 and len(s) >= REFINE_MIN_PERIODS * period:
        period = refine_period(s, period)
    logger.debug(f'{crossings.size} sign changes: period {period:.3f}')
    return PeriodExtraction(TUNNELLING, period, crossings, floor)


def tunnelling_rate(extraction: PeriodExtraction) -> float:
    """
    Reversals per drive period; 0 for trapped runs and None for marginal ones
    """
    if extraction.is_tunnelling:
        return 1.0 / extraction.period
    if extraction.classification == TRAPPED:
        return 0.0
    return None
