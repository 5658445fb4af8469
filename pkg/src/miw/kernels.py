"""Kernel functions, pairwise kernel tables and bandwidth selection.

Two radial kernels are supported, ``exp(-r^2/b^2)`` ("gaussian") and
``exp(-r/b)`` ("exponential"). A third family, "original1d", denotes the
inverse-spacing density of one-dimensional MIW and carries no kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from miw.errors import DegenerateConfigurationError, DimensionError, MiwError

FAMILIES = ("gaussian", "exponential", "original1d")
KDE_FAMILIES = ("gaussian", "exponential")

# distinct exponential-kernel pairs closer than this get a zero gradient
COINCIDENCE_RADIUS = 1e-12  # Å


@dataclass(frozen=True)
class KernelSpec:
    family: str
    b: float = 1.0
    D: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise MiwError(f"unknown kernel family {self.family!r}")
        if self.D not in (1, 2, 3):
            raise DimensionError(f"D must be 1, 2 or 3, got {self.D}")
        if self.family == "original1d":
            if self.D != 1:
                raise DimensionError("original1d requires D = 1")
        elif not (self.b > 0 and math.isfinite(self.b)):
            raise MiwError(f"bandwidth must be positive, got {self.b}")

    def with_bandwidth(self, b):
        return KernelSpec(self.family, b, self.D)

    @property
    def is_kde(self):
        return self.family in KDE_FAMILIES


def _require_kde(family):
    if family not in KDE_FAMILIES:
        raise MiwError(f"family {family!r} has no kernel function")


def normalization_constant(family, D, b):
    """Prefactor making the radial kernel integrate to one over R^D."""
    _require_kde(family)
    if family == "gaussian":
        return 1.0 / (math.sqrt(math.pi) * b) ** D
    return math.gamma(D / 2) / (2 * math.factorial(D - 1) * (math.sqrt(math.pi) * b) ** D)


def profile(family, r):
    """Unnormalized radial kernel at distance ``r`` for ``b = 1``."""
    if family == "gaussian":
        return np.exp(-np.square(r))
    return np.exp(-np.abs(r))


def sphere_area(D):
    """Surface area of the unit sphere in D dimensions."""
    return 2 * math.pi ** (D / 2) / math.gamma(D / 2)


def radial_integral(f, D):
    """Integrate the radial function ``f(r)`` over R^D."""
    val, _ = integrate.quad(lambda r: f(r) * r ** (D - 1), 0, np.inf, epsabs=1e-14, epsrel=1e-12)
    return sphere_area(D) * val


@lru_cache(maxsize=None)
def unit_second_moment(family, D):
    """Per-axis second moment of the normalized kernel at ``b = 1`` (quadrature)."""
    _require_kde(family)
    c = normalization_constant(family, D, 1.0)
    return radial_integral(lambda r: c * r * r * profile(family, r), D) / D


@lru_cache(maxsize=None)
def unit_roughness(family, D):
    """``R(K) = int K^2`` of the normalized kernel at ``b = 1`` (quadrature)."""
    _require_kde(family)
    c = normalization_constant(family, D, 1.0)
    return radial_integral(lambda r: (c * profile(family, r)) ** 2, D)


def kernel_variance(family, D, b):
    """Per-axis variance of the normalized kernel with bandwidth ``b``."""
    return unit_second_moment(family, D) * b * b


def kernel_value(spec, d):
    """Normalized kernel evaluated at displacement(s) ``d`` of shape ``(..., D)``."""
    _require_kde(spec.family)
    r = np.sqrt(np.sum(np.square(d), axis=-1)) / spec.b
    return normalization_constant(spec.family, spec.D, spec.b) * profile(spec.family, r)


@dataclass
class PairTables:
    """Pairwise kernel quantities for an ensemble of N worlds.

    ``P[i, j]`` is the contribution of world j to the density at world i
    (including the 1/N weight), ``Pg[i, j]`` its gradient with respect to
    ``x_i`` and ``H[i, j]`` the corresponding Hessian. Self-terms are
    position-independent, so their gradient and Hessian are zero.
    """

    r: np.ndarray  # (N, N, D) displacements x_i - x_j
    dist: np.ndarray  # (N, N)
    P: np.ndarray  # (N, N)
    Pg: np.ndarray  # (N, N, D)
    H: np.ndarray  # (N, N, D, D)
    n_coincident: int = 0

    @property
    def Pgg(self):
        """Diagonal second derivatives ``d^2 P_ij / d(x_i^(k))^2``, shape (N, N, D)."""
        return np.diagonal(self.H, axis1=2, axis2=3)


def pair_tables(X, spec):
    X = np.asarray(X, dtype=float)
    N, D = X.shape
    if N < 2:
        raise MiwError("pair tables need at least two worlds")
    if D != spec.D:
        raise DimensionError("ensemble and kernel dimensions differ")
    _require_kde(spec.family)
    b = spec.b
    r = X[:, None, :] - X[None, :, :]
    r2 = np.sum(r * r, axis=-1)
    dist = np.sqrt(r2)
    c = normalization_constant(spec.family, D, b) / N
    eye = np.eye(D)
    outer = r[..., :, None] * r[..., None, :]
    off = ~np.eye(N, dtype=bool)
    n_coincident = 0

    if spec.family == "gaussian":
        P = c * np.exp(-r2 / (b * b))
        Pg = -2.0 / b**2 * r * P[..., None]
        H = (-2.0 / b**2 * eye + 4.0 / b**4 * outer) * P[..., None, None]
    else:
        P = c * np.exp(-dist / b)
        close = dist < COINCIDENCE_RADIUS
        n_coincident = int(np.count_nonzero(close & off)) // 2
        safe = np.where(close, 1.0, dist)
        u = r / safe[..., None]
        uu = u[..., :, None] * u[..., None, :]
        Pg = -(1.0 / b) * u * P[..., None]
        H = (uu / b**2 - (eye - uu) / (b * safe[..., None, None])) * P[..., None, None]
        Pg[close] = 0.0
        H[close] = 0.0

    idx = np.arange(N)
    Pg[idx, idx] = 0.0
    H[idx, idx] = 0.0
    return PairTables(r=r, dist=dist, P=P, Pg=Pg, H=H, n_coincident=n_coincident)


def bandwidth_silverman(positions, D=None):
    """Rule-of-thumb bandwidth ``sigma * (4 / ((D + 2) N))^(1/(D + 4))``."""
    x = np.asarray(positions, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    N = x.shape[0]
    D = x.shape[1] if D is None else D
    if N < 2:
        raise MiwError("Silverman bandwidth needs at least two samples")
    sigma = float(np.mean(np.std(x, axis=0, ddof=1)))
    if sigma == 0.0:
        raise DegenerateConfigurationError("all positions coincide")
    return sigma * (4.0 / ((D + 2) * N)) ** (1.0 / (D + 4))


def laplacian_on_grid(field):
    """Second-difference Laplacian of a grid field; zero outside the box."""
    f = field.as_array()
    h = field.grid.h
    lap = np.zeros_like(f)
    padded = np.pad(f, 1)
    core = tuple(slice(1, -1) for _ in range(f.ndim))
    for ax in range(f.ndim):
        up = list(core)
        dn = list(core)
        up[ax] = slice(2, None)
        dn[ax] = slice(0, -2)
        lap += (padded[tuple(up)] - 2 * f + padded[tuple(dn)]) / h**2
    return lap


def bandwidth_amise(target, N, D, family):
    """Bandwidth minimizing the asymptotic MISE for a known target density."""
    _require_kde(family)
    lap = laplacian_on_grid(target)
    R_lap = float(np.sum(lap * lap) * target.grid.cell_volume)
    if not R_lap > 0:
        raise DegenerateConfigurationError("flat target density has zero curvature")
    m2 = unit_second_moment(family, D)
    RK = unit_roughness(family, D)
    return (D * RK / (m2 * m2 * R_lap * N)) ** (1.0 / (D + 4))
