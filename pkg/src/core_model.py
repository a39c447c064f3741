"""Domain types shared by every module: parameter paths, grids and sample paths."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from errors import DomainError

DEFAULT_LEAD_IN = 3
DEFAULT_PAST_HORIZON = 10.0


@dataclass(frozen=True)
class ThetaFunction:
    """
    The parameter path v -> (sigma_v, H_v) of a multifractional process.

    Evaluation is delegated to two vectorized callables. Queries are checked
    against the declared bounds, and any v < 0 is answered with the value
    at 0 (the path is extended constantly into the past).

    Attributes:
        hurst_fn (callable): Maps an array of times to Hurst exponents.
        sigma_fn (callable): Maps an array of times to volatilities.
        eta (float): Declared Hölder exponent of the path.
        bounds (tuple): (H_lo, H_hi, sigma_lo**2, sigma_hi**2).
        horizon (float): Truncation depth of the infinite past.
        nodes (np.ndarray or None): Sample locations when built from samples.

    """

    hurst_fn: object
    sigma_fn: object
    eta: float
    bounds: tuple
    horizon: float = DEFAULT_PAST_HORIZON
    nodes: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        h_lo, h_hi, s2_lo, s2_hi = self.bounds
        if not 0.0 < h_lo <= h_hi < 1.0:
            raise DomainError(f"Hurst bounds must satisfy 0 < H_lo <= H_hi < 1, got {self.bounds[:2]}")
        if not 0.0 <= s2_lo <= s2_hi:
            raise DomainError(f"volatility bounds must satisfy 0 <= s2_lo <= s2_hi, got {self.bounds[2:]}")
        if self.eta <= 0:
            raise DomainError(f"Hölder exponent must be positive, got {self.eta}")
        if self.horizon <= 0:
            raise DomainError(f"truncation horizon must be positive, got {self.horizon}")

    @property
    def is_constant(self):
        """bool: True when both H and sigma are constant on their bounds."""
        h_lo, h_hi, s2_lo, s2_hi = self.bounds
        return h_lo == h_hi and s2_lo == s2_hi

    def hurst(self, v):
        """
        Evaluate H_v.

        Args:
            v (float or array-like): Query times.

        Returns:
            float or np.ndarray: Hurst exponents, same shape as ``v``.

        Raises:
            DomainError: If a value breaks the declared bounds.

        """
        values = np.asarray(self.hurst_fn(np.maximum(np.asarray(v, dtype=float), 0.0)), dtype=float)
        h_lo, h_hi = self.bounds[:2]
        bad = ~((values >= h_lo) & (values <= h_hi))
        if np.any(bad):
            raise DomainError(f"H_v leaves its bounds [{h_lo}, {h_hi}] at {np.count_nonzero(bad)} query point(s)")
        return values if values.ndim else float(values)

    def sigma(self, v):
        """
        Evaluate sigma_v.

        Args:
            v (float or array-like): Query times.

        Returns:
            float or np.ndarray: Volatilities, same shape as ``v``.

        Raises:
            DomainError: If sigma_v**2 breaks the declared bounds.

        """
        values = np.asarray(self.sigma_fn(np.maximum(np.asarray(v, dtype=float), 0.0)), dtype=float)
        s2_lo, s2_hi = self.bounds[2:]
        squared = values**2
        bad = ~((squared >= s2_lo * (1 - 1e-12)) & (squared <= s2_hi * (1 + 1e-12))) | (values < 0)
        if np.any(bad):
            raise DomainError(f"sigma_v^2 leaves its bounds [{s2_lo}, {s2_hi}] at {np.count_nonzero(bad)} query point(s)")
        return values if values.ndim else float(values)

    def integrated_hurst(self, u):
        """
        Integrate the Hurst path from 0 to ``u``.

        Piecewise-linear paths are integrated exactly; other paths use a
        fine trapezoid rule.

        Args:
            u (float or array-like): Upper limits in [0, 1].

        Returns:
            float or np.ndarray: The integrals, same shape as ``u``.

        """
        u_arr = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        nodes = self.nodes if self.nodes is not None else np.linspace(0.0, 1.0, 4097)
        h_nodes = np.asarray(self.hurst(nodes), dtype=float)
        areas = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(nodes) * (h_nodes[1:] + h_nodes[:-1]))])
        seg = np.clip(np.searchsorted(nodes, u_arr, side="right") - 1, 0, len(nodes) - 2)
        h_u = np.interp(u_arr, nodes, h_nodes)
        result = areas[seg] + 0.5 * (u_arr - nodes[seg]) * (h_nodes[seg] + h_u)
        return result if result.ndim else float(result)


@dataclass(frozen=True)
class ObservationGrid:
    """
    The regular observation grid {-lead_in/n, ..., 0, 1/n, ..., n/n}.

    Attributes:
        n (int): Samples per unit time.
        lead_in (int): Number of observations before time zero.

    """

    n: int
    lead_in: int = DEFAULT_LEAD_IN

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"grid resolution n must be a positive integer, got {self.n}")
        if int(self.lead_in) != self.lead_in or self.lead_in < 0:
            raise DomainError(f"lead_in must be a non-negative integer, got {self.lead_in}")

    @property
    def size(self):
        """int: Number of grid points, n + lead_in + 1."""
        return self.n + self.lead_in + 1

    @property
    def times(self):
        """np.ndarray: Grid times, derived as j/n so they never drift."""
        return np.arange(-self.lead_in, self.n + 1) / self.n


@dataclass(frozen=True)
class SamplePath:
    """
    Observations of a process on an ObservationGrid.

    Attributes:
        grid (ObservationGrid): The grid.
        values (np.ndarray): values[j] is X at grid time (j - lead_in)/n.

    """

    grid: ObservationGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def unit_values(self):
        """np.ndarray: The observations at t = 0, 1/n, ..., 1."""
        return self.values[self.grid.lead_in:]

    def scaled(self, factor):
        """Return a copy with every value multiplied by ``factor``."""
        return SamplePath(self.grid, self.values * factor)


@dataclass(frozen=True)
class PathDiagnostics:
    """Structural report produced by :func:`validate_path`."""

    n: int
    lead_in: int
    length: int
    expected_length: int
    bad_count: int
    bad_indices: tuple
    structural_mismatch: bool

    @property
    def valid(self):
        """bool: True when the path has the right length and only finite values."""
        return not self.structural_mismatch and self.bad_count == 0


def theta_from_samples(h_samples, s_samples, eta, horizon=DEFAULT_PAST_HORIZON, nodes=None):
    """
    Build a ThetaFunction that interpolates samples linearly on [0, 1].

    Samples sit on the equally spaced nodes {0, 1/(k-1), ..., 1} unless
    ``nodes`` are given. Outside [0, 1] the path is held constant.

    Args:
        h_samples (array-like): Hurst exponents, each in (0, 1).
        s_samples (array-like): Volatilities, each > 0.
        eta (float): Declared Hölder exponent.
        horizon (float, optional): Truncation depth of the infinite past.
        nodes (array-like, optional): Increasing sample locations from 0 to 1.

    Returns:
        ThetaFunction: The interpolating parameter path.

    Raises:
        DomainError: If lengths differ, fewer than two samples are given, or a
            sample is out of range (the message names its index).

    """
    h = np.asarray(h_samples, dtype=float)
    s = np.asarray(s_samples, dtype=float)
    if h.ndim != 1 or s.ndim != 1 or len(h) != len(s):
        raise DomainError(f"h_samples and s_samples must be 1-d of equal length, got {h.shape} and {s.shape}")
    if len(h) < 2:
        raise DomainError("at least two samples are needed to interpolate a parameter path")
    for idx, value in enumerate(h):
        if not 0.0 < value < 1.0:
            raise DomainError(f"Hurst sample at index {idx} is {value}, outside (0, 1)")
    for idx, value in enumerate(s):
        if not (np.isfinite(value) and value > 0.0):
            raise DomainError(f"volatility sample at index {idx} is {value}, sigma^2 must be > 0")

    if nodes is None:
        nodes = np.linspace(0.0, 1.0, len(h))
    else:
        nodes = np.array(nodes, dtype=float)
        if nodes.shape != h.shape or nodes[0] != 0.0 or nodes[-1] != 1.0 or np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must increase strictly from 0 to 1, one per sample")
    nodes.setflags(write=False)
    h_copy, s_copy = h.copy(), s.copy()

    def hurst_fn(v):
        return np.interp(v, nodes, h_copy)

    def sigma_fn(v):
        return np.interp(v, nodes, s_copy)

    logger.debug(f"Built sampled theta with {len(h)} nodes, H in [{h.min()}, {h.max()}]")
    return ThetaFunction(
        hurst_fn=hurst_fn,
        sigma_fn=sigma_fn,
        eta=eta,
        bounds=(float(h.min()), float(h.max()), float(s.min() ** 2), float(s.max() ** 2)),
        horizon=horizon,
        nodes=nodes,
    )


def constant_theta(hurst, sigma=1.0, eta=1.0, horizon=DEFAULT_PAST_HORIZON):
    """
    Build a constant parameter path.

    A zero volatility is accepted here so degenerate paths can be simulated.

    Args:
        hurst (float): Constant Hurst exponent in (0, 1).
        sigma (float, optional): Constant volatility, >= 0. Defaults to 1.
        eta (float, optional): Declared Hölder exponent. Defaults to 1.
        horizon (float, optional): Truncation depth of the infinite past.

    Returns:
        ThetaFunction: The constant path.

    """
    if sigma < 0:
        raise DomainError(f"volatility must be non-negative, got {sigma}")
    nodes = np.array([0.0, 1.0])
    return ThetaFunction(
        hurst_fn=lambda v: np.full(np.shape(v), float(hurst)),
        sigma_fn=lambda v: np.full(np.shape(v), float(sigma)),
        eta=eta,
        bounds=(float(hurst), float(hurst), float(sigma) ** 2, float(sigma) ** 2),
        horizon=horizon,
        nodes=nodes,
    )


def validate_path(path):
    """
    Report structural problems of a sample path without touching it.

    Args:
        path (SamplePath): The path to check.

    Returns:
        PathDiagnostics: Length, grid parameters and non-finite entries.

    """
    values = np.asarray(path.values)
    bad = np.flatnonzero(~np.isfinite(values))
    expected = path.grid.size
    report = PathDiagnostics(
        n=path.grid.n,
        lead_in=path.grid.lead_in,
        length=len(values),
        expected_length=expected,
        bad_count=len(bad),
        bad_indices=tuple(int(i) for i in bad),
        structural_mismatch=len(values) != expected,
    )
    if not report.valid:
        logger.warning(
            f"Path check failed: length {report.length} (expected {expected}), "
            f"{report.bad_count} non-finite value(s)"
        )
    return report


def write_path_csv(path, destination):
    """
    Write a sample path as CSV with header ``t,x``.

    Times are written as j/n with 12 significant digits; values use the
    shortest round-trip representation so reading back is bit-exact.

    Args:
        path (SamplePath): The path to write.
        destination (str or Path): Output file.

    """
    destination = Path(destination)
    times = [f"{t:.12g}" for t in path.grid.times]
    frame = pd.DataFrame({"t": times, "x": [repr(float(x)) for x in path.values]})
    frame.to_csv(destination, index=False)
    logger.info(f"Wrote path with n={path.grid.n}, lead_in={path.grid.lead_in} to {destination}")


def _read_columns(source, header):
    # header-checked float columns; any parse failure names the file
    try:
        frame = pd.read_csv(source, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DomainError(f"{source}: not a readable CSV file: {e}") from e
    if list(frame.columns) != header:
        raise DomainError(f"{source}: expected header '{','.join(header)}', got {','.join(map(str, frame.columns))}")
    columns = {}
    for name in header:
        try:
            columns[name] = frame[name].to_numpy(dtype=float)
        except (TypeError, ValueError) as e:
            raise DomainError(f"{source}: column '{name}' holds a non-numeric value: {e}") from e
    return columns


def read_path_csv(source):
    """
    Read a sample path written by :func:`write_path_csv`.

    Args:
        source (str or Path): Input file.

    Returns:
        SamplePath: The path, with n reconstructed from the spacing and
        lead_in from the number of negative times.

    Raises:
        DomainError: If the file cannot be parsed, a value is not numeric,
            the header is wrong or the times are not a regular grid.

    """
    source = Path(source)
    columns = _read_columns(source, ["t", "x"])
    t, x = columns["t"], columns["x"]
    if len(t) < 2:
        raise DomainError(f"{source}: a path needs at least two rows")

    n = int(round(1.0 / (t[1] - t[0])))
    lead_in = int(np.count_nonzero(t < 0))
    grid = ObservationGrid(n=n, lead_in=lead_in)
    if len(t) != grid.size or not np.allclose(t, grid.times, rtol=0.0, atol=1e-9):
        raise DomainError(f"{source}: times do not form the regular grid of spacing 1/{n}")

    logger.info(f"Read path with n={n}, lead_in={lead_in} from {source}")
    return SamplePath(grid=grid, values=x)


def read_theta_csv(source, eta=1.0, horizon=DEFAULT_PAST_HORIZON):
    """
    Read a parameter path from CSV with header ``v,hurst,sigma``.

    Args:
        source (str or Path): Input file; ``v`` must increase from 0 to 1.
        eta (float, optional): Declared Hölder exponent.
        horizon (float, optional): Truncation depth of the infinite past.

    Returns:
        ThetaFunction: The path interpolating the rows linearly.

    Raises:
        DomainError: If the file cannot be parsed or the header or the
            samples are invalid.

    """
    source = Path(source)
    columns = _read_columns(source, ["v", "hurst", "sigma"])
    logger.info(f"Read parameter path with {len(columns['v'])} node(s) from {source}")
    return theta_from_samples(columns["hurst"], columns["sigma"], eta=eta, horizon=horizon, nodes=columns["v"])
