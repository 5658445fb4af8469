"""External (classical) potentials with analytic gradients and Laplacians.

All potentials act on a single quantum particle in ``D`` dimensions. The
``evaluate`` method accepts either one position vector of shape ``(D,)`` or a
batch of shape ``(M, D)`` and returns ``(V, grad, laplacian)`` with matching
leading shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from miw.constants import HBAR
from miw.errors import DimensionError, MiwError, SingularityError

LJ_SINGULARITY_RADIUS = 1e-9  # Å


@dataclass(frozen=True)
class PotentialSpec:
    D: int

    def __post_init__(self):
        if self.D not in (1, 2, 3):
            raise DimensionError(f"D must be 1, 2 or 3, got {self.D}")

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.D:
            raise DimensionError(
                f"expected positions with {self.D} components, got shape {np.shape(x)}"
            )
        return x, single

    def evaluate(self, x):
        x, single = self._as_batch(x)
        V, grad, lap = self._evaluate(x)
        if single:
            return float(V[0]), grad[0], float(lap[0])
        return V, grad, lap

    def value(self, x):
        return self.evaluate(x)[0]

    def grad_laplacian(self, x):
        """Gradient of the Laplacian, shape ``(M, D)`` for a batch."""
        x, single = self._as_batch(x)
        out = self._grad_laplacian(x)
        return out[0] if single else out

    def _evaluate(self, x):
        raise NotImplementedError

    def _grad_laplacian(self, x):
        # piecewise-quadratic potentials have a constant Laplacian
        return np.zeros_like(x)


@dataclass(frozen=True)
class Harmonic(PotentialSpec):
    """``V = k/2 |x - center|^2``."""

    k: float = 1.0
    center: tuple = field(default=None)

    def __post_init__(self):
        super().__post_init__()
        if not self.k > 0:
            raise MiwError(f"harmonic k must be positive, got {self.k}")
        if self.center is None:
            object.__setattr__(self, "center", (0.0,) * self.D)
        if len(self.center) != self.D:
            raise DimensionError("center does not match D")

    def _evaluate(self, x):
        d = x - np.asarray(self.center)
        V = 0.5 * self.k * np.sum(d * d, axis=1)
        grad = self.k * d
        lap = np.full(len(x), self.k * self.D)
        return V, grad, lap

    def omega(self, m):
        return math.sqrt(self.k / m)

    def ground_state_energy(self, m):
        return 0.5 * self.D * HBAR * self.omega(m)

    def ground_state_sigma(self, m):
        """Per-axis standard deviation of the ground-state density."""
        return math.sqrt(HBAR / (2.0 * m * self.omega(m)))

    def ground_state_density(self, points, m):
        s2 = self.ground_state_sigma(m) ** 2
        d = np.atleast_2d(points) - np.asarray(self.center)
        return np.exp(-np.sum(d * d, axis=-1) / (2 * s2)) / (2 * np.pi * s2) ** (self.D / 2)


@dataclass(frozen=True)
class LennardJonesAngular(PotentialSpec):
    """Radial 12-6 well around ``x0`` plus an angular penalty away from +x."""

    dVr: float = 1.0
    dVa: float = 0.0
    x0: tuple = field(default=None)
    r0: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not self.dVr > 0:
            raise MiwError("dVr must be positive")
        if self.dVa < 0:
            raise MiwError("dVa must be non-negative")
        if not self.r0 > 0:
            raise MiwError("r0 must be positive")
        if self.x0 is None:
            object.__setattr__(self, "x0", (0.0,) * self.D)
        if len(self.x0) != self.D or not np.all(np.isfinite(self.x0)):
            raise DimensionError("x0 must be a finite vector of length D")

    def classical_minimum(self):
        out = np.asarray(self.x0, dtype=float).copy()
        out[0] += self.r0
        return out

    def _evaluate(self, x):
        d = x - np.asarray(self.x0)
        r = np.sqrt(np.sum(d * d, axis=1))
        if np.any(r < LJ_SINGULARITY_RADIUS):
            raise SingularityError("position coincides with the Lennard-Jones centre")
        s = self.r0 / r
        s6 = s**6
        s12 = s6 * s6
        A, B, D = self.dVr, self.dVa, self.D
        f = A * (s12 - 2 * s6)
        fp = A * (-12 * s12 + 12 * s6) / r
        fpp = A * (156 * s12 - 84 * s6) / r**2
        cos = d[:, 0] / r
        V = f + B * (1 - cos)
        e1 = np.zeros_like(d)
        e1[:, 0] = 1.0
        grad = fp[:, None] * d / r[:, None]
        grad -= B * (e1 / r[:, None] - d[:, :1] * d / r[:, None] ** 3)
        lap = fpp + (D - 1) * fp / r + B * (D - 1) * d[:, 0] / r**3
        return V, grad, lap

    def _grad_laplacian(self, x):
        d = x - np.asarray(self.x0)
        r = np.sqrt(np.sum(d * d, axis=1))
        if np.any(r < LJ_SINGULARITY_RADIUS):
            raise SingularityError("position coincides with the Lennard-Jones centre")
        s = self.r0 / r
        s6 = s**6
        s12 = s6 * s6
        A, B, D = self.dVr, self.dVa, self.D
        fp = A * (-12 * s12 + 12 * s6) / r
        fpp = A * (156 * s12 - 84 * s6) / r**2
        fppp = A * (-2184 * s12 + 672 * s6) / r**3
        radial = fppp + (D - 1) * (fpp / r - fp / r**2)
        out = radial[:, None] * d / r[:, None]
        e1 = np.zeros_like(d)
        e1[:, 0] = 1.0
        out += B * (D - 1) * (e1 / r[:, None] ** 3 - 3 * d[:, :1] * d / r[:, None] ** 5)
        return out


@dataclass(frozen=True)
class DoubleWell(PotentialSpec):
    """Two parabolas ``k (|x| - x0)^2 / 2`` joined at the origin (1D only)."""

    k: float = 10.0
    x0: float = 0.2

    def __post_init__(self):
        super().__post_init__()
        if self.D != 1:
            raise DimensionError("DoubleWell is defined only for D = 1")
        if not self.k > 0 or not self.x0 > 0:
            raise MiwError("DoubleWell needs k > 0 and x0 > 0")

    @property
    def barrier(self):
        return 0.5 * self.k * self.x0**2

    def _evaluate(self, x):
        xs = x[:, 0]
        u = np.abs(xs) - self.x0
        V = 0.5 * self.k * u * u
        grad = (self.k * u * np.sign(xs))[:, None]
        lap = np.full(len(x), self.k)
        return V, grad, lap

    def zero_point_energy(self, m):
        """Harmonic zero-point energy of one well."""
        return 0.5 * HBAR * math.sqrt(self.k / m)


def double_well_turning_point(spec, zero_point_energy):
    """Distance from the barrier top to where a well rises to ``zero_point_energy``."""
    if not 0 < zero_point_energy < spec.barrier:
        raise MiwError(
            f"zero-point energy {zero_point_energy} outside (0, {spec.barrier})"
        )
    return spec.x0 - math.sqrt(2 * zero_point_energy / spec.k)


PRESETS = ("harm1", "harm10", "lj1", "dwell")


def preset(name, D=1):
    if name == "harm1":
        return Harmonic(D=D, k=1.0)
    if name == "harm10":
        return Harmonic(D=D, k=10.0)
    if name == "lj1":
        x0 = (-2.5,) + (0.0,) * (D - 1)
        return LennardJonesAngular(D=D, dVr=1.0, dVa=10.0, x0=x0, r0=1.0)
    if name == "dwell":
        return DoubleWell(D=D, k=10.0, x0=0.2)
    raise MiwError(f"unknown potential preset {name!r}")


def evaluate(spec, x):
    """Functional alias for ``spec.evaluate(x)``."""
    return spec.evaluate(x)
