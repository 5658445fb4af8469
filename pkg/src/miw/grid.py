"""Uniform axis-aligned grids and scalar fields sampled on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from miw.errors import DimensionError, GridMismatchError, MiwError

# points per side used for the reference grids, by dimension
DEFAULT_POINTS = {1: 200, 2: 40, 3: 15}


@dataclass(frozen=True)
class GridSpec:
    """Box ``[lo, hi]^D`` with ``points`` nodes per side, endpoints included."""

    lo: float = -2.0
    hi: float = 2.0
    points: int = 200
    D: int = 1

    def __post_init__(self):
        if not self.hi > self.lo:
            raise MiwError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.points < 8:
            raise MiwError(f"grid needs at least 8 points per side, got {self.points}")
        if self.D not in (1, 2, 3):
            raise DimensionError(f"D must be 1, 2 or 3, got {self.D}")

    @classmethod
    def default(cls, D):
        return cls(-2.0, 2.0, DEFAULT_POINTS[D], D)

    @property
    def h(self):
        return (self.hi - self.lo) / (self.points - 1)

    @property
    def cell_volume(self):
        return self.h**self.D

    @property
    def shape(self):
        return (self.points,) * self.D

    @property
    def size(self):
        return self.points**self.D

    @cached_property
    def axis(self):
        return np.linspace(self.lo, self.hi, self.points)

    @cached_property
    def nodes(self):
        """Node coordinates, shape ``(points**D, D)``, C order."""
        mesh = np.meshgrid(*([self.axis] * self.D), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class GridField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.size:
            raise GridMismatchError(
                f"{self.values.size} values for a grid of {self.grid.size} nodes"
            )

    def integral(self):
        return float(self.values.sum() * self.grid.cell_volume)

    def normalized(self):
        total = self.integral()
        if total <= 0:
            raise MiwError("cannot normalize a field with non-positive integral")
        return GridField(self.grid, self.values / total)

    def as_array(self):
        return self.values.reshape(self.grid.shape)

    def to_csv(self, path):
        names = ["x", "y", "z"][: self.grid.D]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["value"])
            for node, v in zip(self.grid.nodes, self.values):
                w.writerow([repr(float(c)) for c in node] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path, grid):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if not np.allclose(data[:, :-1], grid.nodes):
            raise GridMismatchError("CSV node coordinates do not match the grid")
        return cls(grid, data[:, -1])
