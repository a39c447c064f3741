"""
Covariance kernels of second-order fBm increments and asymptotic variances.

All covariances are expressed in the unit where gamma_H(0) = 2, i.e. twice
the usual fractional-Gaussian-noise normalization. Every quantity used by
the estimators is a ratio, so the factor cancels.
"""

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger

from errors import DomainError, NumericalInconsistencyError

# tail bound constant for sum_{|h| > h_max} of squared second-order covariances
_TAIL_CONSTANT = 64.0
_MAX_H_MAX = 2**22


@dataclass(frozen=True)
class AsymVarConfig:
    """
    Truncation settings for the infinite lag sums.

    Attributes:
        h_max (int): Initial truncation lag, enlarged until the tail bound
            drops below ``tail_tol``.
        tail_tol (float): Bound on the neglected tail mass.
        convention (str): "exact" for the long-run variance of the
            estimator as implemented, "printed" for :func:`tau_squared`.

    """

    h_max: int = 1000
    tail_tol: float = 1e-10
    convention: str = "exact"

    def __post_init__(self):
        if int(self.h_max) != self.h_max or self.h_max < 2:
            raise DomainError(f"h_max must be an integer >= 2, got {self.h_max}")
        if not self.tail_tol > 0:
            raise DomainError(f"tail_tol must be positive, got {self.tail_tol}")
        if self.convention not in ("exact", "printed"):
            raise DomainError(f"convention must be 'exact' or 'printed', got {self.convention!r}")


def _check_hurst(H):
    if not 0.0 < H < 1.0:
        raise DomainError(f"Hurst exponent must lie in (0, 1), got {H}")


def _abs_pow(x, p):
    # |0|^p := 0, the continuous extension
    return np.abs(np.asarray(x, dtype=float)) ** p


def gamma_small(H, h):
    """
    Autocovariance of first-order fBm increments.

    Args:
        H (float): Hurst exponent in (0, 1).
        h (float or array-like): Lag(s).

    Returns:
        float or np.ndarray: |h+1|^{2H} - 2|h|^{2H} + |h-1|^{2H}.

    Raises:
        DomainError: If H is outside (0, 1).

    """
    _check_hurst(H)
    h = np.asarray(h, dtype=float)
    p = 2.0 * H
    value = _abs_pow(h + 1, p) - 2.0 * _abs_pow(h, p) + _abs_pow(h - 1, p)
    return value if value.ndim else float(value)


def gamma_big(H, h):
    """
    Autocovariance of second-order fBm increments.

    Args:
        H (float): Hurst exponent in (0, 1).
        h (int or array-like): Lag(s).

    Returns:
        float or np.ndarray: -gamma(h+1) + 2 gamma(h) - gamma(h-1).

    """
    _check_hurst(H)
    h = np.asarray(h, dtype=float)
    value = -gamma_small(H, h + 1) + 2.0 * gamma_small(H, h) - gamma_small(H, h - 1)
    return value if np.ndim(value) else float(value)


def gamma_bar(H, h):
    """
    The 2x2 covariance matrix of the increment pair, as printed.

    Args:
        H (float): Hurst exponent in (0, 1).
        h (int): Lag.

    Returns:
        np.ndarray: [[G(h), G(h)+G(h+1)], [G(h)+G(h-1), 2G(h)+G(h-1)+G(h+1)]].

    """
    g0, gp, gm = gamma_big(H, h), gamma_big(H, h + 1), gamma_big(H, h - 1)
    return np.array([[g0, g0 + gp], [g0 + gm, 2.0 * g0 + gm + gp]])


def sigma_matrix(H, h):
    """Twice the entry-wise square of :func:`gamma_bar`."""
    return 2.0 * gamma_bar(H, h) ** 2


def increment_covariances(H, h):
    """
    Exact lag-h covariances of the pair (chi, chi_tilde).

    Uses chi_tilde_i = chi_i + 2 chi_{i-1} + chi_{i-2}.

    Args:
        H (float): Hurst exponent in (0, 1).
        h (int or array-like): Lag(s).

    Returns:
        tuple: (Cov(chi_0, chi_h), Cov(chi_0, chi~_h), Cov(chi~_0, chi_h),
        Cov(chi~_0, chi~_h)), each in Gamma_H units.

    """
    h = np.asarray(h, dtype=float)
    stencil = (1.0, 2.0, 1.0)
    cc = gamma_big(H, h)
    ct = sum(w * gamma_big(H, h - k) for k, w in enumerate(stencil))
    tc = sum(w * gamma_big(H, h + k) for k, w in enumerate(stencil))
    tt = sum(
        wa * wb * gamma_big(H, h + a - b)
        for a, wa in enumerate(stencil)
        for b, wb in enumerate(stencil)
    )
    return cc, ct, tc, tt


def _resolve_h_max(H, cfg):
    # Gamma_H(h)^2 decays like h^{4H-8}; the tail sum like h^{4H-7}
    h_max = int(cfg.h_max)
    exponent = 4.0 * H - 7.0
    while _TAIL_CONSTANT * h_max**exponent > cfg.tail_tol and h_max < _MAX_H_MAX:
        h_max *= 2
    if h_max != cfg.h_max:
        logger.debug(f"Enlarged lag truncation for H={H} from {cfg.h_max} to {h_max}")
    return h_max


def tau_squared(H, cfg=None):
    """
    The local asymptotic variance series in its printed form.

    Args:
        H (float): Hurst exponent in (0, 1).
        cfg (AsymVarConfig, optional): Truncation settings.

    Returns:
        float: The truncated series, with h_max enlarged until the analytic
        tail bound falls below ``cfg.tail_tol``.

    Raises:
        DomainError: If H is outside (0, 1).
        NumericalInconsistencyError: If the result is not positive.

    """
    cfg = cfg or AsymVarConfig()
    _check_hurst(H)
    h_max = _resolve_h_max(H, cfg)
    # lags -h_max-1 .. h_max+1, so g0 runs over |h| <= h_max
    g = gamma_big(H, np.arange(-h_max - 1, h_max + 2, dtype=float))
    g0, gm, gp = g[1:-1], g[:-2], g[2:]
    terms = (
        g0**2
        + 2.0 ** (-4.0 * H) * (2.0 * g0 + gm + gp) ** 2
        - 2.0 ** (-2.0 * H + 1.0) * (g0 + gm) ** 2
    )
    value = float(np.sum(terms)) / (2.0 * gamma_big(H, 0) ** 2)
    if not value > 0:
        raise NumericalInconsistencyError(f"tau^2({H}) = {value} is not positive")
    return value


def long_run_variance(H, cfg=None):
    """
    Long-run variance of the linearized integrated-estimator summand.

    The summand is (chi~^2 / E chi~^2 - chi^2 / E chi^2) / (2 ln 2); its
    long-run variance is the limit variance of sqrt(n) times the error of
    the integrated Hurst estimator under a locally constant H.

    Args:
        H (float): Hurst exponent in (0, 1).
        cfg (AsymVarConfig, optional): Truncation settings.

    Returns:
        float: The variance; 3.5 / (4 ln(2)^2) at H = 1/2.

    Raises:
        NumericalInconsistencyError: If the result is not positive.

    """
    cfg = cfg or AsymVarConfig()
    _check_hurst(H)
    h_max = _resolve_h_max(H, cfg)
    h = np.arange(-h_max, h_max + 1, dtype=float)
    cc, ct, tc, tt = increment_covariances(H, h)
    v1 = float(gamma_big(H, 0))
    v2 = float(increment_covariances(H, 0)[3])
    # Cov(A^2, B^2) = 2 Cov(A, B)^2 for centered jointly Gaussian A, B
    lrv = np.sum(2.0 * cc**2 / v1**2 + 2.0 * tt**2 / v2**2 - 2.0 * (ct**2 + tc**2) / (v1 * v2))
    value = float(lrv) / (4.0 * math.log(2.0) ** 2)
    if not value > 0:
        raise NumericalInconsistencyError(f"long-run variance at H={H} is {value}, not positive")
    return value


def asymptotic_variance(H, cfg=None):
    """
    Dispatch to the variance selected by ``cfg.convention``.

    Args:
        H (float): Hurst exponent in (0, 1).
        cfg (AsymVarConfig, optional): Settings; "exact" by default.

    Returns:
        float: :func:`long_run_variance` or :func:`tau_squared`.

    """
    cfg = cfg or AsymVarConfig()
    if cfg.convention == "printed":
        return tau_squared(H, cfg)
    return long_run_variance(H, cfg)


def variance_table(cfg=None, resolution=0.001):
    """
    Tabulate the selected variance on a Hurst grid for fast lookups.

    Args:
        cfg (AsymVarConfig, optional): Settings.
        resolution (float, optional): Grid step in H.

    Returns:
        tuple: (grid, values) arrays spanning [0.01, 0.99].

    """
    cfg = cfg or AsymVarConfig()
    count = int(round((0.99 - 0.01) / resolution)) + 1
    grid = np.linspace(0.01, 0.99, count)
    values = np.array([asymptotic_variance(float(H), cfg) for H in grid])
    return grid, values
