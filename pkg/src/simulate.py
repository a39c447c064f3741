"""
Path generators.

Exact fractional Brownian motion by circulant embedding, discretized
Itô and classical multifractional Brownian motion on a shared Brownian
mesh, and time-changed Brownian motion for the limit laws of the tests.
"""

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from loguru import logger
from scipy import integrate, linalg, signal
from scipy.interpolate import BarycentricInterpolator

from core_model import DEFAULT_LEAD_IN, ObservationGrid, SamplePath
from errors import DomainError, SynthesisError
from fracmath import gamma_small

_MASK64 = (1 << 64) - 1
TRUNCATION_WARN_RATIO = 0.01


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed, *key):
    """
    Derive an independent 64-bit stream seed from a base seed and a key.

    Args:
        seed (int): Base seed.
        *key: Any values with a stable ``repr`` (scenario, n, replication).

    Returns:
        int: The derived seed.

    """
    digest = hashlib.blake2b(repr(key).encode("utf-8"), digest_size=8).digest()
    return _splitmix64((int(seed) & _MASK64) ^ int.from_bytes(digest, "little"))


@dataclass(frozen=True)
class FbmConfig:
    """Settings for exact fBm synthesis."""

    hurst: float
    sigma: float = 1.0
    n: int = 1024
    lead_in: int = DEFAULT_LEAD_IN
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise DomainError(f"Hurst exponent must lie in (0, 1), got {self.hurst}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.n < 8:
            raise DomainError(f"grid resolution must be at least 8, got {self.n}")


@dataclass(frozen=True)
class MbmConfig:
    """
    Settings for the shared-mesh discretization of a multifractional path.

    Attributes:
        theta (ThetaFunction): Parameter path.
        n (int): Grid resolution.
        lead_in (int): Observations before time zero.
        past_horizon (float): Lower limit -M of the truncated integral.
        m_sub (int): Brownian sub-steps per observation interval.
        variant (str): "ito" or "classical".
        seed (int): Seed of the Brownian mesh.
        hurst_nodes (int): Chebyshev nodes for the interpolation in H.

    """

    theta: object
    n: int = 1024
    lead_in: int = DEFAULT_LEAD_IN
    past_horizon: float = 10.0
    m_sub: int = 16
    variant: str = "ito"
    seed: int = 0
    hurst_nodes: int = 16

    def __post_init__(self):
        if self.past_horizon < 1:
            raise DomainError(f"past_horizon must be at least 1, got {self.past_horizon}")
        if int(self.m_sub) != self.m_sub or self.m_sub < 1:
            raise DomainError(f"m_sub must be a positive integer, got {self.m_sub}")
        if self.variant not in ("ito", "classical"):
            raise DomainError(f"variant must be 'ito' or 'classical', got {self.variant!r}")
        if self.n < 8:
            raise DomainError(f"grid resolution must be at least 8, got {self.n}")
        if self.hurst_nodes < 2:
            raise DomainError(f"hurst_nodes must be at least 2, got {self.hurst_nodes}")


@dataclass(frozen=True)
class MeshDiagnostics:
    """Discretization report for a multifractional path."""

    past_horizon: float
    m_sub: int
    cells: int
    hurst_nodes: int
    truncated_variance_ratio: float

    @property
    def horizon_too_short(self):
        """bool: True when the cut-off past carries a noticeable share of Var(X_1)."""
        return self.truncated_variance_ratio > TRUNCATION_WARN_RATIO


@lru_cache(maxsize=32)
def _circulant_eigenvalues(hurst, size):
    # autocovariance of unit-spacing fGn with Var = 1
    lags = np.arange(size + 1, dtype=float)
    r = 0.5 * gamma_small(hurst, lags)
    row = np.concatenate([r, r[-2:0:-1]])
    eigenvalues = np.fft.fft(row).real
    eigenvalues.setflags(write=False)
    return eigenvalues


def _fgn_cholesky(hurst, size, rng):
    r = 0.5 * gamma_small(hurst, np.arange(size, dtype=float))
    try:
        factor = linalg.cholesky(linalg.toeplitz(r), lower=True)
    except linalg.LinAlgError as e:
        raise SynthesisError(f"Cholesky fallback failed for H={hurst}, size={size}: {e}") from e
    return factor @ rng.standard_normal(size)


def fgn(hurst, size, rng):
    """
    Sample unit-variance fractional Gaussian noise.

    Uses the Davies-Harte circulant embedding and falls back to a Cholesky
    factorization when the embedding has negative eigenvalues.

    Args:
        hurst (float): Hurst exponent in (0, 1).
        size (int): Number of increments.
        rng (np.random.Generator): Random source.

    Returns:
        np.ndarray: ``size`` increments with autocovariance gamma_H(k) / 2.

    Raises:
        SynthesisError: If both methods fail.

    """
    eigenvalues = _circulant_eigenvalues(float(hurst), int(size))
    if eigenvalues.min() < -1e-10 * eigenvalues.max():
        logger.warning(f"Circulant embedding not nonnegative-definite for H={hurst}, size={size}; using Cholesky")
        return _fgn_cholesky(hurst, size, rng)

    m = 2 * size
    noise = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    w = np.fft.fft(np.sqrt(np.maximum(eigenvalues, 0.0) / m) * noise)
    return w[:size].real


def simulate_fbm(cfg):
    """
    Simulate exact fractional Brownian motion on the observation grid.

    Args:
        cfg (FbmConfig): Model, grid and seed.

    Returns:
        SamplePath: A path with X_0 = 0 and
        Cov(X_s, X_t) = sigma^2/2 (|t|^{2H} + |s|^{2H} - |t-s|^{2H}).

    """
    grid = ObservationGrid(n=cfg.n, lead_in=cfg.lead_in)
    rng = np.random.default_rng(cfg.seed)
    steps = grid.size - 1
    increments = fgn(cfg.hurst, steps, rng) * cfg.sigma * float(cfg.n) ** (-cfg.hurst)
    cumulative = np.concatenate([[0.0], np.cumsum(increments)])
    values = cumulative - cumulative[grid.lead_in]
    logger.debug(f"Simulated fBm with H={cfg.hurst}, sigma={cfg.sigma}, n={cfg.n}, seed={cfg.seed}")
    return SamplePath(grid=grid, values=values)


def _cell_kernel(hurst, cells, delta):
    # cell averages of x^{H-1/2} over [(d-1) delta, d delta], d = 0..cells
    a1 = hurst + 0.5
    d = np.arange(cells + 1, dtype=float)
    g = np.empty(cells + 1)
    g[0] = 0.0
    g[1:] = delta ** (hurst - 0.5) * (d[1:] ** a1 - d[:-1] ** a1) / a1
    return g


def _truncated_variance_ratio(hurst, horizon):
    a = hurst - 0.5

    def integrand(x):
        return ((1.0 + x) ** a - x**a) ** 2

    tail, _ = integrate.quad(integrand, horizon, np.inf, limit=200)
    body, _ = integrate.quad(integrand, 0.0, horizon, limit=200)
    total = body + tail + 1.0 / (2.0 * a + 1.0)
    return tail / total


def mesh_diagnostics(cfg):
    """
    Describe the discretization implied by an MbmConfig.

    Args:
        cfg (MbmConfig): The configuration.

    Returns:
        MeshDiagnostics: Mesh size and the share of Var(X_1) lost by cutting
        the integral at -M, for the worst Hurst exponent on the path.

    """
    h_lo, h_hi = cfg.theta.bounds[:2]
    past_cells = int(np.ceil(cfg.past_horizon * cfg.n)) * cfg.m_sub
    ratio = max(_truncated_variance_ratio(h, cfg.past_horizon) for h in {h_lo, h_hi})
    return MeshDiagnostics(
        past_horizon=cfg.past_horizon,
        m_sub=cfg.m_sub,
        cells=past_cells + cfg.n * cfg.m_sub,
        hurst_nodes=1 if h_lo == h_hi else cfg.hurst_nodes,
        truncated_variance_ratio=ratio,
    )


def _chebyshev_basis(h_lo, h_hi, count, points):
    k = np.arange(count)
    nodes = 0.5 * (h_lo + h_hi) + 0.5 * (h_hi - h_lo) * np.cos(np.pi * (k + 0.5) / count)
    # closed-form weights of first-kind Chebyshev nodes
    wi = (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * count))
    basis = BarycentricInterpolator(nodes, np.eye(count), wi=wi)(points)
    return nodes, np.atleast_2d(basis)


def simulate_mbm(cfg):
    """
    Simulate a multifractional path on a shared Brownian mesh.

    X_t = sum_j fbar(t, cell_j) dB_j over cells of width 1/(n m_sub) on
    [-M, 1]. The kernel (t-s)_+^{H-1/2} - (-s)_+^{H-1/2} is averaged over
    each cell in closed form. For the Itô variant theta is frozen at the
    cell midpoint; for the classical variant H and sigma are frozen at t.
    A non-constant H is handled by interpolating the kernel on Chebyshev
    nodes in H, which reduces the sum to FFT convolutions.

    Args:
        cfg (MbmConfig): Model, mesh and seed.

    Returns:
        SamplePath: The simulated observations.

    """
    theta = cfg.theta
    grid = ObservationGrid(n=cfg.n, lead_in=cfg.lead_in)
    diagnostics = mesh_diagnostics(cfg)
    if diagnostics.horizon_too_short:
        logger.warning(
            f"Past horizon M={cfg.past_horizon} cuts {diagnostics.truncated_variance_ratio:.1%} "
            f"of Var(X_1); increase past_horizon for a closer approximation"
        )

    delta = 1.0 / (cfg.n * cfg.m_sub)
    past_cells = int(np.ceil(cfg.past_horizon * cfg.n)) * cfg.m_sub
    cells = diagnostics.cells
    rng = np.random.default_rng(cfg.seed)
    dB = rng.standard_normal(cells) * np.sqrt(delta)

    boundaries = past_cells + np.arange(-grid.lead_in, grid.n + 1) * cfg.m_sub
    origin = past_cells
    times = grid.times
    midpoints = (np.arange(cells) - past_cells + 0.5) * delta
    h_lo, h_hi = theta.bounds[:2]

    logger.debug(
        f"Simulating {cfg.variant} mBm: n={cfg.n}, cells={cells}, "
        f"H in [{h_lo}, {h_hi}], nodes={diagnostics.hurst_nodes}, seed={cfg.seed}"
    )

    def field(weights, kernel):
        y = signal.fftconvolve(weights, kernel)
        return y[boundaries] - y[origin]

    if h_lo == h_hi:
        kernel = _cell_kernel(h_lo, cells, delta)
        if theta.is_constant:
            values = theta.sigma(0.0) * field(dB, kernel)
        elif cfg.variant == "ito":
            values = field(theta.sigma(midpoints) * dB, kernel)
        else:
            values = theta.sigma(times) * field(dB, kernel)
        return SamplePath(grid=grid, values=values)

    if cfg.variant == "ito":
        nodes, basis = _chebyshev_basis(h_lo, h_hi, cfg.hurst_nodes, theta.hurst(midpoints))
        weighted = theta.sigma(midpoints) * dB
        values = np.zeros(grid.size)
        for k, node in enumerate(nodes):
            values += field(basis[:, k] * weighted, _cell_kernel(node, cells, delta))
    else:
        nodes, basis = _chebyshev_basis(h_lo, h_hi, cfg.hurst_nodes, theta.hurst(times))
        values = np.zeros(grid.size)
        for k, node in enumerate(nodes):
            values += basis[:, k] * field(dB, _cell_kernel(node, cells, delta))
        values *= theta.sigma(times)
    return SamplePath(grid=grid, values=values)


def _check_clock(var_curve):
    clock = np.asarray(getattr(var_curve, "values", var_curve), dtype=float)
    if clock.ndim != 1 or len(clock) == 0:
        raise DomainError("variance clock must be a non-empty 1-d sequence")
    if clock[0] < 0 or np.any(np.diff(clock) < 0):
        raise DomainError("variance clock must start at >= 0 and be nondecreasing")
    return clock


def simulate_time_changed_bm(var_curve, seed):
    """
    Sample W(Sigma(u_k)) for a Brownian motion W on a variance clock.

    Args:
        var_curve (array-like or VarCurve): Nondecreasing clock values.
        seed (int or np.random.Generator): Random source.

    Returns:
        np.ndarray: Cumulative sums of independent N(0, Sigma(u_k) - Sigma(u_{k-1}))
        increments, with Sigma(u_{-1}) = 0.

    Raises:
        DomainError: If the clock decreases or starts below zero.

    """
    return time_changed_bm_batch(var_curve, 1, seed)[0]


def time_changed_bm_batch(var_curve, reps, seed):
    """
    Sample ``reps`` independent paths of W(Sigma(u_k)) at once.

    Args:
        var_curve (array-like or VarCurve): Nondecreasing clock values.
        reps (int): Number of paths.
        seed (int or np.random.Generator): Random source.

    Returns:
        np.ndarray: Array of shape (reps, len(var_curve)).

    """
    clock = _check_clock(var_curve)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    scales = np.sqrt(np.diff(clock, prepend=0.0))
    return np.cumsum(rng.standard_normal((reps, len(clock))) * scales, axis=1)
