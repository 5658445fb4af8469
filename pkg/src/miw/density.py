"""World ensembles, density reconstruction and sampling of world positions."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erfc

from miw.errors import DimensionError, GridMismatchError, MiwError, OrderingError
from miw.grid import GridField
from miw.kernels import kernel_value


@dataclass
class WorldEnsemble:
    """N worlds of a single particle in D dimensions (K = D degrees of freedom)."""

    X: np.ndarray
    m: float
    V: np.ndarray = None
    Q: int = 1

    def __post_init__(self):
        X = np.array(self.X, dtype=float)  # own copy: runs advance X in place
        if X.ndim == 1:
            X = X[:, None]
        self.X = X
        self.V = np.zeros_like(X) if self.V is None else np.array(self.V, dtype=float).reshape(X.shape)
        if self.Q != 1:
            raise MiwError("only single-particle ensembles (Q = 1) are supported")
        if X.shape[1] not in (1, 2, 3):
            raise DimensionError(f"K = Q*D must be 1, 2 or 3, got {X.shape[1]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(self.V))):
            raise MiwError("non-finite positions or velocities")
        if not self.m > 0:
            raise MiwError("mass must be positive")

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def D(self):
        return self.X.shape[1]

    @property
    def K(self):
        return self.Q * self.D

    def copy(self, **changes):
        base = replace(self, X=self.X.copy(), V=self.V.copy())
        return replace(base, **changes) if changes else base


def check_sorted(X):
    x = np.asarray(X, dtype=float).reshape(-1)
    if np.any(np.diff(x) <= 0):
        raise OrderingError("1D world positions must be strictly increasing")
    return x


def kde_density(q, ensemble, kernel):
    """Kernel density estimate at point(s) ``q`` (shape ``(D,)`` or ``(M, D)``)."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    X = ensemble.X
    out = np.empty(len(q))
    # chunk over query points to bound memory on large grids
    step = max(1, 2_000_000 // max(1, X.shape[0] * X.shape[1]))
    for s in range(0, len(q), step):
        d = q[s : s + step, None, :] - X[None, :, :]
        out[s : s + step] = kernel_value(kernel, d).sum(axis=1) / ensemble.N
    return float(out[0]) if single else out


def inverse_spacing_density(ensemble):
    """Per-world density ``1 / (N (x_{n+1} - x_n))``; the last world reuses the previous gap."""
    if ensemble.D != 1:
        raise DimensionError("inverse-spacing density is one-dimensional")
    x = check_sorted(ensemble.X)
    gaps = np.diff(x)
    gaps = np.append(gaps, gaps[-1])
    return 1.0 / (ensemble.N * gaps)


def density_on_grid(ensemble, kernel, grid):
    if grid.D != ensemble.D:
        raise GridMismatchError("grid and ensemble dimensions differ")
    return GridField(grid, kde_density(grid.nodes, ensemble, kernel))


def rss_error(a, b):
    """Unweighted root-sum-square difference of two fields on the same grid."""
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")
    return float(np.sqrt(np.sum((a.values - b.values) ** 2)))


def _cell_masses(target):
    p = np.clip(target.values, 0, None) * target.grid.cell_volume
    total = p.sum()
    if not total > 0:
        raise MiwError("target density has no mass")
    return p / total


def largest_remainder(p, N):
    """Integer counts summing to N, proportional to p (Hamilton apportionment)."""
    quota = p * N
    counts = np.floor(quota).astype(int)
    left = N - counts.sum()
    if left > 0:
        rem = quota - counts
        # stable sort keeps ties in grid order, so placement is deterministic
        order = np.argsort(-rem, kind="stable")
        counts[order[:left]] += 1
    return counts


def cumulative_rounding(p, N):
    """Integer counts summing to N from rounding ``N * CDF`` (systematic sampling).

    Cells whose mass is below one world still receive worlds at the right
    frequency, so the tails of the target are represented.
    """
    edges = np.floor(N * np.cumsum(p) + 0.5).astype(int)
    edges[-1] = N
    return np.diff(edges, prepend=0)


ROUNDING = {"cumulative": cumulative_rounding, "largest_remainder": largest_remainder}


def _sublattice(c, D, h):
    """``c`` offsets on a regular lattice inside a cube of side h centred at 0."""
    side = math.ceil(round(c ** (1.0 / D), 9))
    ticks = (np.arange(side) + 0.5) / side * h - 0.5 * h
    mesh = np.meshgrid(*([ticks] * D), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if len(pts) == c:
        return pts
    pick = np.round(np.linspace(0, len(pts) - 1, c)).astype(int)
    return pts[pick]


def sample_uniform_fill(target, N, rounding="cumulative"):
    """Deterministic placement matching the target's mass per grid cell.

    ``rounding`` chooses how fractional cell quotas become integer counts:
    ``"cumulative"`` rounds the running total, ``"largest_remainder"`` rounds
    each cell down and hands the leftovers to the largest remainders.
    """
    if N < 1:
        raise MiwError("need at least one world")
    if rounding not in ROUNDING:
        raise MiwError(f"unknown rounding {rounding!r}")
    grid = target.grid
    counts = ROUNDING[rounding](_cell_masses(target), N)
    out = []
    for idx in np.flatnonzero(counts):
        out.append(grid.nodes[idx] + _sublattice(int(counts[idx]), grid.D, grid.h))
    X = np.concatenate(out, axis=0)
    if grid.D == 1:
        X = np.sort(X, axis=0)
    return X


def sample_monte_carlo(target, N, seed=None):
    """I.i.d. draws from the cell distribution with uniform jitter inside each cell."""
    grid = target.grid
    rng = np.random.default_rng(seed)
    if N <= 0:
        return np.empty((0, grid.D))
    cdf = np.cumsum(_cell_masses(target))
    cdf[-1] = 1.0
    cells = np.searchsorted(cdf, rng.random(N), side="right")
    jitter = (rng.random((N, grid.D)) - 0.5) * grid.h
    X = grid.nodes[cells] + jitter
    if grid.D == 1:
        X = np.sort(X, axis=0)
    return X


def kde_mass_below(ensemble, kernel, threshold=0.0):
    """KDE probability mass with first coordinate below ``threshold`` (1D kernels)."""
    if ensemble.D != 1:
        raise DimensionError("kde_mass_below is one-dimensional")
    u = (threshold - ensemble.X[:, 0]) / kernel.b
    if kernel.family == "gaussian":
        cdf = 1.0 - 0.5 * erfc(u)
    else:
        cdf = np.where(u >= 0, 1.0 - 0.5 * np.exp(-np.abs(u)), 0.5 * np.exp(-np.abs(u)))
    return float(np.mean(cdf))
