import logging

import numpy as np

from dyntunnel.errors import NonFinite

LOGGER_NAME = 'dyntunnel'
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

_logger = logging.getLogger(LOGGER_NAME)
_handler = None


def setup_logging(verbose: bool = False, quiet: bool = False):
    """
    Configure the package logger for the command line; calling it again replaces the handler
    :param verbose: log DEBUG messages too
    :param quiet: only log warnings and errors
    :return:
    """
    global _handler
    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING

    _logger.setLevel(level)
    if _handler is not None:
        _logger.removeHandler(_handler)
    # bound to the current sys.stderr
    _handler = logging.StreamHandler()
    _handler.setFormatter(logging.Formatter(LOG_FORMAT))
    _logger.addHandler(_handler)


def log(msg):
    """
    Log a progress message for the user
    :param msg: The message to log
    :return:
    """
    _logger.info(msg)


def progress_enabled() -> bool:
    return _logger.isEnabledFor(logging.INFO)


def check_finite(values, what: str = 'array'):
    """
    Raise NonFinite if any entry of values is NaN or infinite
    :param values: array-like of real or complex numbers
    :param what: name used in the error message
    :return: the values, unchanged
    """
    if not np.all(np.isfinite(values)):
        raise NonFinite(f'{what} contains NaN or Inf')
    return values


def fold_to_window(value, width: float):
    """
    Fold value into the window (-width/2, width/2]
    :param value: scalar or array
    :param width: window width
    :return: folded value
    """
    value = np.asarray(value, dtype=float)
    folded = value - width * np.floor(value / width + 0.5)
    folded = np.where(folded <= -width / 2, folded + width, folded)
    return float(folded) if folded.ndim == 0 else folded


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def float_to_sci(f) -> str:
    """
    Transforms a float to a short scientific-notation string, or 'null' for None
    :param f: The float
    :return: string
    """
    return 'null' if f is None else '{:.4g}'.format(f)


def float_to_percent(f: float) -> str:
    """
    Transforms a float to a percent string
    :param f: The float
    :return: string
    """
    return '{:.1%}'.format(f)
