"""Kernels and local polynomial regression weights."""

from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from scipy import linalg

from errors import DomainError, RankDeficiencyError

SHAPES = ("epanechnikov", "uniform", "triangular", "custom")
SUPPORTS = ("two_sided", "left", "right")
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class Kernel:
    """
    A kernel K with integral one on its support.

    Attributes:
        shape (str): "epanechnikov", "uniform", "triangular" or "custom".
        support (str): "two_sided" ([-1, 1]), "left" ([-1, 0]) or
            "right" ([0, 1]).
        samples (tuple): Equally spaced values over the support, for the
            custom shape only; they are interpolated linearly and
            normalized.

    """

    shape: str = "epanechnikov"
    support: str = "two_sided"
    samples: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DomainError(f"kernel shape must be one of {SHAPES}, got {self.shape!r}")
        if self.support not in SUPPORTS:
            raise DomainError(f"kernel support must be one of {SUPPORTS}, got {self.support!r}")
        if self.shape == "custom":
            values = np.asarray(self.samples, dtype=float) if self.samples is not None else None
            if values is None or values.ndim != 1 or len(values) < 2:
                raise DomainError("a custom kernel needs at least two samples")
            if np.any(values < 0) or not np.any(values > 0):
                raise DomainError("custom kernel samples must be >= 0 with some positive mass")
            object.__setattr__(self, "samples", tuple(float(v) for v in values))

    @property
    def interval(self):
        """tuple: The closed support (lo, hi)."""
        return {"two_sided": (-1.0, 1.0), "left": (-1.0, 0.0), "right": (0.0, 1.0)}[self.support]

    def __call__(self, x):
        """
        Evaluate K, returning zero outside the support.

        Args:
            x (float or array-like): Points.

        Returns:
            np.ndarray: Kernel values.

        """
        return kernel_function(self)(x)


def kernel_function(kernel):
    """
    Build a vectorized evaluator of K.

    Args:
        kernel (Kernel): The kernel description.

    Returns:
        callable: Maps an array of points to kernel values, normalized so the
        integral over the support is one.

    """
    lo, hi = kernel.interval
    width = hi - lo
    if kernel.shape == "custom":
        grid = np.linspace(lo, hi, len(kernel.samples))
        values = np.asarray(kernel.samples)
        mass = np.trapezoid(values, grid) if hasattr(np, "trapezoid") else np.trapz(values, grid)

        def profile(x):
            return np.interp(x, grid, values) / mass

    elif kernel.shape == "uniform":

        def profile(x):
            return np.full(np.shape(x), 1.0 / width)

    elif kernel.shape == "triangular":

        def profile(x):
            return (1.0 - np.abs(x)) * (2.0 / width)

    else:

        def profile(x):
            return 0.75 * (1.0 - np.asarray(x) ** 2) * (2.0 / width)

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= lo) & (x <= hi)
        return np.where(inside, profile(np.clip(x, lo, hi)), 0.0)

    return evaluate


@dataclass(frozen=True)
class WeightVector:
    """
    Sparse local polynomial weights w_{i,n}(u).

    Attributes:
        u (float): Evaluation point.
        b (float): Bandwidth.
        degree (int): Polynomial degree l.
        n (int): Number of observations the weights apply to.
        positions (np.ndarray): 0-based array positions (i - 1) in the window.
        weights (np.ndarray): The non-zero weights, aligned with positions.

    """

    u: float
    b: float
    degree: int
    n: int
    positions: np.ndarray
    weights: np.ndarray

    @property
    def indices(self):
        """np.ndarray: 1-based observation indices i."""
        return self.positions + 1

    @property
    def max_weight_constant(self):
        """float: n b max|w|, the constant of the sup-norm bound."""
        return float(self.n * self.b * np.max(np.abs(self.weights)))

    @property
    def abs_sum_constant(self):
        """float: sum |w|."""
        return float(np.sum(np.abs(self.weights)))

    @property
    def effective_bandwidth(self):
        """float: Distance from u to the farthest point carrying weight."""
        return float(np.max(np.abs(self.indices / self.n - self.u)))

    def dense(self):
        """Return the weights as a dense length-n array."""
        out = np.zeros(self.n)
        out[self.positions] = self.weights
        return out


def _window(kernel, n, u, b, exclude=None):
    i = np.arange(1, n + 1)
    offsets = i / n - u
    lo, hi = kernel.interval
    z = offsets / b
    keep = (z >= lo - _EDGE_TOL) & (z <= hi + _EDGE_TOL)
    if exclude is not None:
        keep &= ~exclude
    positions = np.flatnonzero(keep)
    k = kernel_function(kernel)(np.clip(z[positions], lo, hi)) / b
    positive = k > 0
    return positions[positive], z[positions][positive], k[positive]


def weights(kernel, n, u, b, l, exclude=None):
    """
    Local polynomial regression weights at ``u``.

    Solves the kernel-weighted least-squares problem of degree ``l`` by QR
    on the scaled basis ((i/n - u)/b)^k and returns the row that produces
    the intercept. Near the boundary the same construction runs on the
    truncated window.

    Args:
        kernel (Kernel): The kernel.
        n (int): Number of observations, placed at i/n for i = 1..n.
        u (float): Evaluation point in [0, 1].
        b (float): Bandwidth in (0, 1).
        l (int): Polynomial degree >= 0.
        exclude (np.ndarray, optional): Boolean mask of positions to leave out.

    Returns:
        WeightVector: The weights.

    Raises:
        DomainError: If u, b or l is out of range.
        RankDeficiencyError: If fewer than l + 1 points carry kernel mass.

    """
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"evaluation point u must lie in [0, 1], got {u}")
    if not 0.0 < b < 1.0:
        raise DomainError(f"bandwidth must lie in (0, 1), got {b}")
    if int(l) != l or l < 0:
        raise DomainError(f"degree must be a non-negative integer, got {l}")

    positions, z, k = _window(kernel, n, u, b, exclude)
    if len(positions) < l + 1:
        raise RankDeficiencyError(
            f"window u={u:.6g}, b={b:.6g} holds {len(positions)} point(s) with kernel mass, "
            f"degree {l} needs {l + 1}"
        )

    root_k = np.sqrt(k)
    design = root_k[:, None] * np.vander(z, l + 1, increasing=True)
    q, r = linalg.qr(design, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * diag.max():
        raise RankDeficiencyError(f"window u={u:.6g}, b={b:.6g} gives a singular degree-{l} design")

    e0 = np.zeros(l + 1)
    e0[0] = 1.0
    row = linalg.solve_triangular(r, e0, trans="T")
    w = root_k * (q @ row)
    return WeightVector(u=float(u), b=float(b), degree=int(l), n=int(n), positions=positions, weights=w)


def smooth(weight_vector, y):
    """
    Apply weights to a sequence.

    Args:
        weight_vector (WeightVector): The weights.
        y (array-like): Length-n sequence of scalars or of pairs (shape (n, 2)).

    Returns:
        float or np.ndarray: sum_i w_i y_i, component-wise for pairs.

    Raises:
        DomainError: If the length of ``y`` is not n.

    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] != weight_vector.n:
        raise DomainError(f"sequence has length {y.shape[0]}, weights expect {weight_vector.n}")
    value = weight_vector.weights @ y[weight_vector.positions]
    return value if np.ndim(value) else float(value)


def weights_matrix(kernel, n, u_grid, b, l):
    """
    Dense weights for a grid of evaluation points.

    Args:
        kernel (Kernel): The kernel.
        n (int): Number of observations.
        u_grid (array-like): Evaluation points.
        b (float): Bandwidth.
        l (int): Degree.

    Returns:
        np.ndarray: Array of shape (len(u_grid), n).

    """
    return np.vstack([weights(kernel, n, float(u), b, l).dense() for u in np.atleast_1d(u_grid)])


class GridSmoother:
    """
    Local polynomial smoothing at grid points u = j/n.

    Interior weights are the same template shifted, so interior points
    are evaluated with one correlation; points whose window is truncated
    by the data boundary are fitted individually and cached.
    """

    def __init__(self, kernel, n, b, l):
        self.kernel = kernel
        self.n = int(n)
        self.b = float(b)
        self.l = int(l)
        self._boundary = {}
        lo, hi = kernel.interval
        reach = int(np.floor(self.n * self.b * (1 + _EDGE_TOL)))
        self.d_min = int(round(lo)) * reach
        self.d_max = int(round(hi)) * reach
        self.template = self._template()

    def _template(self):
        # a point far from both ends sees the full window
        centre = max(1 - self.d_min, 1)
        if centre + self.d_max > self.n:
            return None
        wv = weights(self.kernel, self.n, centre / self.n, self.b, self.l)
        full = np.zeros(self.d_max - self.d_min + 1)
        full[wv.indices - centre - self.d_min] = wv.weights
        return full

    def is_interior(self, j):
        """bool: True when the window of u = j/n lies inside 1..n."""
        return self.template is not None and j + self.d_min >= 1 and j + self.d_max <= self.n

    def weights_at(self, j):
        """
        Weights at u = j/n.

        Args:
            j (int): Grid index in 0..n.

        Returns:
            WeightVector: The weights.

        """
        if self.is_interior(j):
            offsets = np.arange(self.d_min, self.d_max + 1)
            nz = self.template != 0
            return WeightVector(
                u=j / self.n, b=self.b, degree=self.l, n=self.n,
                positions=j + offsets[nz] - 1, weights=self.template[nz],
            )
        if j not in self._boundary:
            self._boundary[j] = weights(self.kernel, self.n, j / self.n, self.b, self.l)
        return self._boundary[j]

    def apply(self, y, targets, exclude=None):
        """
        Smooth ``y`` at u = j/n for every j in ``targets``.

        Args:
            y (np.ndarray): Length-n data, 1-d or 2-d with observations on axis 0.
            targets (array-like): Grid indices j.
            exclude (np.ndarray, optional): Boolean mask of positions to drop;
                windows touching a dropped position are refitted without it.

        Returns:
            np.ndarray: Smoothed values, shape (len(targets),) + y.shape[1:].

        """
        y = np.asarray(y, dtype=float)
        targets = np.asarray(targets, dtype=int)
        out = np.empty((len(targets),) + y.shape[1:])
        interior = np.array([self.is_interior(j) for j in targets], dtype=bool)

        if np.any(interior):
            cols = y if y.ndim == 2 else y[:, None]
            filled = np.where(np.isfinite(cols), cols, 0.0)
            # valid[k] = sum_d w_d y[k + d - d_min], i.e. the value at j = k - d_min + 1
            smoothed = np.column_stack(
                [np.correlate(filled[:, c], self.template, mode="valid") for c in range(cols.shape[1])]
            )
            rows = targets[interior] + self.d_min - 1
            values = smoothed[rows]
            out[interior] = values if y.ndim == 2 else values[:, 0]

        for idx in np.flatnonzero(~interior):
            out[idx] = smooth(self.weights_at(int(targets[idx])), y)

        if exclude is not None and np.any(exclude):
            bad = np.flatnonzero(exclude) + 1
            for idx, j in enumerate(targets):
                lo, hi = j + self.d_min, j + self.d_max
                if np.any((bad >= lo) & (bad <= hi)):
                    wv = weights(self.kernel, self.n, j / self.n, self.b, self.l, exclude=exclude)
                    out[idx] = smooth(wv, np.where(exclude[:, None] if y.ndim == 2 else exclude, 0.0, y))
        logger.debug(
            f"Smoothed {len(targets)} point(s), {int(interior.sum())} by template, b={self.b:.4g}, l={self.l}"
        )
        return out
