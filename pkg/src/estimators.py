"""
Hurst estimators built on second-order increments.

The local estimators compare the squared increments at two frequencies:
for a locally fBm-like path E(chi~^2) / E(chi^2) = 2^{2H}. The integrated
estimator sums a linearized version of the local log-ratio and converges
at the parametric rate.
"""

import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
from loguru import logger

from errors import DomainError
from fracmath import AsymVarConfig, asymptotic_variance, variance_table
from localpoly import GridSmoother, Kernel, weights

_GRID_TOL = 1e-9
HURST_NUDGE = (0.01, 0.99)
EXCLUSION_WARN_SHARE = 0.10
MIN_LEAD_IN = 3


@dataclass(frozen=True)
class IncrementPair:
    """
    Second-order increments at step 1/n and 2/n.

    chi[i-1] = X_{i/n} - 2 X_{(i-1)/n} + X_{(i-2)/n} and
    chi_tilde[i-1] = X_{i/n} - 2 X_{(i-2)/n} + X_{(i-4)/n}, for i = 1..n.
    """

    chi: np.ndarray
    chi_tilde: np.ndarray

    @property
    def n(self):
        """int: Number of increments."""
        return len(self.chi)

    @property
    def squares(self):
        """np.ndarray: Array of shape (n, 2) holding (chi^2, chi~^2)."""
        return np.column_stack([self.chi**2, self.chi_tilde**2])


@dataclass(frozen=True)
class EstimatorParams:
    """
    Tuning of the local and integrated estimators.

    Attributes:
        kernel (Kernel): Smoothing kernel.
        bandwidth (float or None): Fixed b_n; None applies the rule
            bandwidth_const * n^{-1/(2 eta + 1)}.
        bandwidth_const (float): Constant of the bandwidth rule.
        eta (float): Hölder exponent assumed by the bandwidth rule.
        degree (int): Local polynomial degree l.
        epsilon_floor (float): Moment components are clamped below at this
            fraction of the window mean of chi^2.
        lag (int or None): L_n of the integrated estimator; None gives
            ceil(n^{0.3}).

    """

    kernel: Kernel = field(default_factory=Kernel)
    bandwidth: float = None
    bandwidth_const: float = 1.0
    eta: float = 1.0
    degree: int = 1
    epsilon_floor: float = 0.01
    lag: int = None

    def __post_init__(self):
        if self.bandwidth is not None and not 0.0 < self.bandwidth < 0.5:
            raise DomainError(f"bandwidth must lie in (0, 1/2), got {self.bandwidth}")
        if self.bandwidth_const <= 0 or self.eta <= 0:
            raise DomainError("bandwidth_const and eta must be positive")
        if int(self.degree) != self.degree or self.degree < 0:
            raise DomainError(f"degree must be a non-negative integer, got {self.degree}")
        if not self.epsilon_floor > 0:
            raise DomainError(f"epsilon_floor must be positive, got {self.epsilon_floor}")
        if self.lag is not None and (int(self.lag) != self.lag or self.lag < 1):
            raise DomainError(f"lag must be a positive integer, got {self.lag}")

    def one_sided(self):
        """Return a copy whose kernel keeps its shape but is supported on [-1, 0]."""
        if self.kernel.support == "left":
            return self
        return replace(self, kernel=replace(self.kernel, support="left"))


@dataclass
class Diagnostics:
    """Counters collected while estimating, written to the JSON sidecar."""

    bandwidth: float = None
    lag: int = None
    clamped: int = 0
    clipped: int = 0
    edge_local_constant: int = 0
    dropped_corrections: int = 0
    excluded_indices: list = field(default_factory=list)
    unreliable_windows: int = 0
    effective_bandwidth_min: float = None
    effective_bandwidth_max: float = None

    def to_dict(self):
        """Return a JSON-serializable dict."""
        return asdict(self)


@dataclass(frozen=True)
class MomentPair:
    """The smoothed second moments (phi1, phi2) at one point."""

    phi1: float
    phi2: float
    clamped: bool = False


@dataclass(frozen=True)
class HurstCurve:
    """Estimated u -> H(u) with values clipped to [0, 1]."""

    u: np.ndarray
    values: np.ndarray
    method: str
    n: int
    raw: np.ndarray = field(default=None, repr=False)
    diagnostics: Diagnostics = field(default_factory=Diagnostics, repr=False)


@dataclass(frozen=True)
class IntegratedCurve:
    """
    Estimated u -> integral of H over [0, u], on the grid u = k/n.

    Attributes:
        u (np.ndarray): Grid k/n, k = 0..n.
        values (np.ndarray): Curve values; zero before the start index.
        start (int): First summation index 2L.
        n (int): Number of increments.
        summands (np.ndarray): Per-index summands, zero before ``start``.
        diagnostics (Diagnostics): Counters.

    """

    u: np.ndarray
    values: np.ndarray
    start: int
    n: int
    summands: np.ndarray = field(default=None, repr=False)
    diagnostics: Diagnostics = field(default_factory=Diagnostics, repr=False)

    def partial_sum(self, u1, u2):
        """Sum of the summands over floor(u1 n) < t <= floor(u2 n), divided by n."""
        k1, k2 = int(np.floor(u1 * self.n)), int(np.floor(u2 * self.n))
        return float(np.sum(self.summands[k1 + 1:k2 + 1]) / self.n)


@dataclass(frozen=True)
class VarCurve:
    """Plug-in variance clock u -> Sigma(u), nondecreasing, Sigma(0) = 0."""

    u: np.ndarray
    values: np.ndarray


def bandwidth(params, n):
    """
    Resolve b_n.

    Args:
        params (EstimatorParams): Settings.
        n (int): Number of increments.

    Returns:
        float: The explicit bandwidth, or c n^{-1/(2 eta + 1)}.

    Raises:
        DomainError: If the result is not in (0, 1/2).

    """
    b = params.bandwidth
    if b is None:
        b = params.bandwidth_const * float(n) ** (-1.0 / (2.0 * params.eta + 1.0))
    if not 0.0 < b < 0.5:
        raise DomainError(f"resolved bandwidth {b} for n={n} is outside (0, 1/2)")
    return b


def lag(params, n):
    """
    Resolve L_n, warning when it falls outside (n^{1/6}, n^{1/2}).

    Args:
        params (EstimatorParams): Settings.
        n (int): Number of increments.

    Returns:
        int: The lag.

    """
    L = params.lag if params.lag is not None else int(math.ceil(float(n) ** 0.3))
    if not float(n) ** (1.0 / 6.0) < L < float(n) ** 0.5:
        logger.warning(f"Lag L={L} lies outside (n^(1/6), n^(1/2)) for n={n}")
    return L


def increments(path):
    """
    Second-order increments of a sample path.

    Args:
        path (SamplePath): Observations including at least three lead-in points.

    Returns:
        IncrementPair: Unscaled finite differences for i = 1..n.

    Raises:
        DomainError: If the lead-in is shorter than three observations.

    """
    lead_in, n = path.grid.lead_in, path.grid.n
    if lead_in < MIN_LEAD_IN:
        raise DomainError(
            f"chi_tilde_1 needs X at index -3/n but the path starts at -{lead_in}/n; lead_in must be >= {MIN_LEAD_IN}"
        )
    x = np.asarray(path.values, dtype=float)

    def at(shift):
        # X_{(i + shift)/n} for i = 1..n
        start = lead_in + 1 + shift
        return x[start:start + n]

    chi = at(0) - 2.0 * at(-1) + at(-2)
    chi_tilde = at(0) - 2.0 * at(-2) + at(-4)
    return IncrementPair(chi=chi, chi_tilde=chi_tilde)


def _grid_index(u, n):
    j = np.rint(np.asarray(u, dtype=float) * n)
    aligned = np.abs(np.asarray(u) * n - j) < 1e-6
    return j.astype(int), aligned


def _smooth_at(data, params, n, b, u_grid, smoother=None, exclude=None):
    """Smooth ``data`` at every u, via the grid smoother where u = j/n."""
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    smoother = smoother or GridSmoother(params.kernel, n, b, params.degree)
    j, aligned = _grid_index(u_grid, n)
    out = np.empty((len(u_grid),) + data.shape[1:])
    if np.any(aligned):
        out[aligned] = smoother.apply(data, j[aligned], exclude=exclude)
    for idx in np.flatnonzero(~aligned):
        wv = weights(params.kernel, n, float(u_grid[idx]), b, params.degree, exclude=exclude)
        out[idx] = wv.weights @ data[wv.positions]
    return out, smoother


def _window_means(values, params, n, b, u_grid):
    # unweighted mean of chi^2 over the kernel window around each u
    lo, hi = params.kernel.interval
    cumulative = np.concatenate([[0.0], np.cumsum(values)])
    u_grid = np.atleast_1d(u_grid)
    first = np.clip(np.ceil((u_grid + lo * b) * n - _GRID_TOL), 1, n).astype(int)
    last = np.clip(np.floor((u_grid + hi * b) * n + _GRID_TOL), 1, n).astype(int)
    last = np.maximum(last, first)
    return (cumulative[last] - cumulative[first - 1]) / (last - first + 1)


def _truncated_windows(params, n, b, u_grid):
    """Mask of points whose one-sided window is cut short by an end of the sample."""
    support = params.kernel.support
    if params.degree == 0 or support == "two_sided":
        return np.zeros(len(u_grid), dtype=bool)
    if support == "left":
        return u_grid * n - b * n < 1.0 - _GRID_TOL
    return u_grid * n + b * n > n + _GRID_TOL


def _moment_curve(inc, params, u_grid, diagnostics, smoother=None):
    n = inc.n
    b = bandwidth(params, n)
    squares = inc.squares
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    smoother = smoother or GridSmoother(params.kernel, n, b, params.degree)
    # a one-sided window cut by the sample end gets a local mean
    edge = _truncated_windows(params, n, b, u_grid)
    phi = np.empty((len(u_grid), 2))
    if np.any(~edge):
        phi[~edge], _ = _smooth_at(squares, params, n, b, u_grid[~edge], smoother)
    if np.any(edge):
        phi[edge], _ = _smooth_at(squares, replace(params, degree=0), n, b, u_grid[edge])
        diagnostics.edge_local_constant += int(edge.sum())
    floor = params.epsilon_floor * _window_means(squares[:, 0], params, n, b, u_grid)
    low = phi < floor[:, None]
    clamped_rows = np.any(low, axis=1)
    if np.any(clamped_rows):
        logger.debug(f"Clamped {int(clamped_rows.sum())} moment pair(s) at the epsilon floor")
    phi = np.where(low, floor[:, None], phi)
    diagnostics.bandwidth = b
    diagnostics.clamped += int(clamped_rows.sum())
    return phi, clamped_rows, smoother


def phi_hat(inc, params, u):
    """
    Local polynomial estimate of (E chi^2, E chi~^2) at u.

    Args:
        inc (IncrementPair): Increments.
        params (EstimatorParams): Settings.
        u (float): Evaluation point.

    Returns:
        MomentPair: Components clamped below at epsilon_floor times the
        window mean of chi^2.

    """
    phi, clamped, _ = _moment_curve(inc, params, [u], Diagnostics())
    return MomentPair(phi1=float(phi[0, 0]), phi2=float(phi[0, 1]), clamped=bool(clamped[0]))


def log_ratio(phi1, phi2):
    """Half the base-2 log of phi2 / phi1, unclipped."""
    return 0.5 * np.log2(np.asarray(phi2) / np.asarray(phi1))


def _clip_with_count(raw, diagnostics):
    clipped = np.clip(raw, 0.0, 1.0)
    diagnostics.clipped += int(np.count_nonzero((raw < 0.0) | (raw > 1.0)))
    return clipped


def hurst_log_ratio(inc, params, u_grid):
    """
    Smooth first, take the ratio second.

    Args:
        inc (IncrementPair): Increments.
        params (EstimatorParams): Settings.
        u_grid (array-like): Evaluation points.

    Returns:
        HurstCurve: (1/2) log2(phi2 / phi1) clipped to [0, 1].

    """
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    diagnostics = Diagnostics()
    phi, _, _ = _moment_curve(inc, params, u_grid, diagnostics)
    raw = log_ratio(phi[:, 0], phi[:, 1])
    values = _clip_with_count(raw, diagnostics)
    logger.info(f"Log-ratio estimate on {len(u_grid)} point(s), b={diagnostics.bandwidth:.4g}, clipped={diagnostics.clipped}")
    return HurstCurve(u=u_grid, values=values, method="log_ratio", n=inc.n, raw=raw, diagnostics=diagnostics)


def hurst_smoothed_log(inc, params, u_grid):
    """
    Take the ratio first, smooth second.

    Indices where chi^2 or chi~^2 vanishes are excluded and the affected
    windows are refitted without them.

    Args:
        inc (IncrementPair): Increments.
        params (EstimatorParams): Settings.
        u_grid (array-like): Evaluation points.

    Returns:
        HurstCurve: (1/2) sum_i w_i log2(chi~_i^2 / chi_i^2), clipped to [0, 1].

    """
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    n = inc.n
    b = bandwidth(params, n)
    diagnostics = Diagnostics(bandwidth=b)
    sq = inc.squares
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.log2(sq[:, 1] / sq[:, 0])
    exclude = ~np.isfinite(ratios)
    if np.any(exclude):
        diagnostics.excluded_indices = [int(i) + 1 for i in np.flatnonzero(exclude)]
        logger.warning(f"Excluded {int(exclude.sum())} increment(s) with a zero square from the log-ratios")
        window_share = _window_means(exclude.astype(float), params, n, b, u_grid)
        diagnostics.unreliable_windows = int(np.count_nonzero(window_share > EXCLUSION_WARN_SHARE))
        if diagnostics.unreliable_windows:
            logger.warning(
                f"{diagnostics.unreliable_windows} window(s) lost more than "
                f"{EXCLUSION_WARN_SHARE:.0%} of their entries; estimates there are unreliable"
            )
    smoothed, _ = _smooth_at(np.where(exclude, 0.0, ratios), params, n, b, u_grid, exclude=exclude)
    raw = 0.5 * smoothed
    values = _clip_with_count(raw, diagnostics)
    logger.info(f"Smoothed-log estimate on {len(u_grid)} point(s), b={b:.4g}, clipped={diagnostics.clipped}")
    return HurstCurve(u=u_grid, values=values, method="smoothed_log", n=n, raw=raw, diagnostics=diagnostics)


def hurst_global(inc):
    """
    The stationary change-of-frequency estimator.

    Args:
        inc (IncrementPair): Increments.

    Returns:
        float: (1/2) log2(sum chi~^2 / sum chi^2), clipped to [0, 1].

    """
    raw = float(log_ratio(np.sum(inc.chi**2), np.sum(inc.chi_tilde**2)))
    return min(max(raw, 0.0), 1.0)


def _require_left_kernel(params):
    if params.kernel.support != "left":
        raise DomainError(
            f"the integrated estimator needs a kernel supported on [-1, 0], got support {params.kernel.support!r}"
        )


def lagged_hurst(inc, params):
    """
    One-sided local estimates at (t - L)/n for t = 2L..n.

    Args:
        inc (IncrementPair): Increments.
        params (EstimatorParams): Settings with a left-supported kernel.

    Where the one-sided window is cut short by the start of the sample the
    moments come from a local mean instead of a degree-l fit.

    Returns:
        tuple: (t indices, clipped H, moment pairs of shape (m, 2), clamped
        mask, Diagnostics).

    """
    _require_left_kernel(params)
    n = inc.n
    L = lag(params, n)
    if n <= 4 * L:
        raise DomainError(f"n={n} must exceed 4 L = {4 * L}")
    diagnostics = Diagnostics(lag=L)
    t = np.arange(2 * L, n + 1)
    u = (t - L) / n
    phi, clamped, smoother = _moment_curve(inc, params, u, diagnostics)
    hurst = _clip_with_count(log_ratio(phi[:, 0], phi[:, 1]), diagnostics)
    spans = [smoother.weights_at(int(j)).effective_bandwidth for j in (t[0] - L, t[-1] - L)]
    diagnostics.effective_bandwidth_min, diagnostics.effective_bandwidth_max = min(spans), max(spans)
    return t, hurst, phi, clamped, diagnostics


def integrated_hurst(inc, params):
    """
    Integrated Hurst estimator with a one-step linearization.

    H(u) is estimated by (1/n) sum_{t=2L}^{floor(un)} [H_n((t-L)/n)
    + (chi~_t^2 / phi2 - chi_t^2 / phi1) / (2 ln 2)], with phi and H_n taken
    at the lagged point (t-L)/n from a kernel supported on [-1, 0]. The
    correction is dropped where the moment pair sits at the epsilon floor.

    Args:
        inc (IncrementPair): Increments.
        params (EstimatorParams): Settings with a left-supported kernel.

    Returns:
        IntegratedCurve: The curve on u = k/n, k = 0..n.

    Raises:
        DomainError: If the kernel is not left-supported or n <= 4L.

    """
    t, hurst, phi, clamped, diagnostics = lagged_hurst(inc, params)
    n = inc.n
    sq = inc.squares[t - 1]
    correction = (sq[:, 1] / phi[:, 1] - sq[:, 0] / phi[:, 0]) / (2.0 * math.log(2.0))
    correction[clamped] = 0.0
    diagnostics.dropped_corrections = int(clamped.sum())
    if diagnostics.dropped_corrections:
        logger.warning(f"Dropped the correction term at {diagnostics.dropped_corrections} clamped moment pair(s)")
    summands = np.zeros(n + 1)
    summands[t] = hurst + correction
    values = np.cumsum(summands) / n
    logger.info(
        f"Integrated estimate: n={n}, L={diagnostics.lag}, b={diagnostics.bandwidth:.4g}, "
        f"H(1)={values[-1]:.4f}, clipped={diagnostics.clipped}, clamped={diagnostics.clamped}"
    )
    return IntegratedCurve(
        u=np.arange(n + 1) / n, values=values, start=int(t[0]), n=n, summands=summands, diagnostics=diagnostics,
    )


def naive_integrated_hurst(curve):
    """
    Riemann sum of a local Hurst curve, (1/n) sum_{t <= un} H(t/n).

    Args:
        curve (HurstCurve): Estimates on grid points t/n.

    Returns:
        IntegratedCurve: The cumulative sum on u = k/n.

    """
    n = curve.n
    t, aligned = _grid_index(curve.u, n)
    if not np.all(aligned):
        raise DomainError("the naive integrated estimator needs a curve on grid points t/n")
    summands = np.zeros(n + 1)
    summands[t] = curve.values
    return IntegratedCurve(
        u=np.arange(n + 1) / n, values=np.cumsum(summands) / n, start=int(t.min()), n=n,
        summands=summands, diagnostics=curve.diagnostics,
    )


@lru_cache(maxsize=8)
def _cached_table(cfg):
    return variance_table(cfg)


def _variance_of(hurst, cfg):
    unique, inverse = np.unique(hurst, return_inverse=True)
    if len(unique) <= 256:
        table = np.array([asymptotic_variance(float(h), cfg) for h in unique])
        return table[inverse]
    grid, values = _cached_table(cfg)
    return np.interp(hurst, grid, values)


def variance_curve(hurst, params, cfg=None):
    """
    Plug-in estimate of the variance clock Sigma(u).

    Args:
        hurst (HurstCurve): Local estimates on grid points t/n.
        params (EstimatorParams): Settings; provides L_n.
        cfg (AsymVarConfig, optional): Variance settings.

    Returns:
        VarCurve: (1/n) sum_{t=2L}^{floor(un)} v(H(t/n)) on u = k/n, with
        H nudged into [0.01, 0.99] first.

    """
    cfg = cfg or AsymVarConfig()
    n = hurst.n
    L = lag(params, n)
    t = np.arange(2 * L, n + 1)
    h_at_t = np.interp(t / n, hurst.u, hurst.values)
    h_at_t = np.clip(h_at_t, *HURST_NUDGE)
    summands = np.zeros(n + 1)
    summands[t] = _variance_of(h_at_t, cfg)
    values = np.cumsum(summands) / n
    logger.debug(f"Variance clock: Sigma(1)={values[-1]:.4f} ({cfg.convention} convention)")
    return VarCurve(u=np.arange(n + 1) / n, values=values)
