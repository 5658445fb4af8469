"""Matrix Numerov eigensolver for the Schrödinger equation in 1-3 dimensions.

The box walls sit on the outermost grid nodes, where the wavefunction is
zero; the unknowns are the interior nodes. With ``A_i`` the second-difference
operator along axis i,

    L = sum_i A_i + (1/12) sum_{i<j} (h_i^2 + h_j^2) A_i A_j
    B = I + (1/12) sum_i h_i^2 A_i
    M = -(hbar^2 / 2m) B^-1 L + V

All ``A_i`` commute, so ``B^-1 L`` is symmetric and M can be diagonalized
with a symmetric solver. ``method="generalized"`` instead solves
``(-(hbar^2/2m) L + B V) psi = E B psi`` without inverting B.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy import linalg

from miw.constants import HBAR
from miw.errors import MiwError
from miw.grid import GridField


@dataclass
class NumerovOperator:
    grid: object
    A: list  # per-axis second-difference matrices on the interior
    L: np.ndarray
    B: np.ndarray
    V: np.ndarray  # potential on interior nodes
    m: float

    @property
    def kinetic_prefactor(self):
        return -(HBAR**2) / (2 * self.m)

    def matrix(self):
        try:
            BinvL = linalg.solve(self.B, self.L, assume_a="pos")
        except linalg.LinAlgError as exc:
            raise MiwError("singular Numerov B matrix") from exc
        return self.kinetic_prefactor * BinvL + np.diag(self.V)


@dataclass
class EigenResult:
    E0: float
    psi0: np.ndarray  # on the full grid, zero on the walls
    density: GridField
    energies: np.ndarray = None


def second_difference(n, h):
    return (np.eye(n, k=1) - 2 * np.eye(n) + np.eye(n, k=-1)) / h**2


def interior_mask(grid):
    inner = np.zeros(grid.points, dtype=bool)
    inner[1:-1] = True
    mesh = np.meshgrid(*([inner] * grid.D), indexing="ij")
    return np.logical_and.reduce([m.ravel() for m in mesh])


def build_operator(grid, potential, m):
    D = grid.D
    n = grid.points - 2
    h = grid.h
    T = second_difference(n, h)
    eye = np.eye(n)
    A = []
    for ax in range(D):
        factors = [T if k == ax else eye for k in range(D)]
        A.append(reduce(np.kron, factors))
    size = n**D
    L = sum(A)
    for i in range(D):
        for j in range(i + 1, D):
            L = L + (2 * h * h / 12.0) * (A[i] @ A[j])
    B = np.eye(size) + (h * h / 12.0) * sum(A)
    nodes = grid.nodes[interior_mask(grid)]
    V = np.asarray(potential.value(nodes), dtype=float)
    return NumerovOperator(grid=grid, A=A, L=L, B=B, V=V, m=m)


def _publish(grid, vec_inner):
    psi = np.zeros(grid.size)
    psi[interior_mask(grid)] = vec_inner
    norm = np.sqrt(np.sum(psi**2) * grid.cell_volume)
    psi /= norm
    if psi.sum() < 0:
        psi = -psi
    return psi, GridField(grid, psi**2)


def ground_state(grid, potential, m, method="symmetric", n_states=1):
    """Lowest eigenpair of the Numerov operator."""
    op = build_operator(grid, potential, m)
    if method == "symmetric":
        M = op.matrix()
        M = 0.5 * (M + M.T)
        w, v = linalg.eigh(M, subset_by_index=[0, n_states - 1])
    elif method == "dense":
        w, v = linalg.eig(op.matrix())
        order = np.argsort(w.real)[:n_states]
        w, v = w[order].real, v[:, order].real
    elif method == "generalized":
        lhs = op.kinetic_prefactor * op.L + op.B * op.V[None, :]
        w, v = linalg.eig(lhs, op.B)
        order = np.argsort(w.real)[:n_states]
        w, v = w[order].real, v[:, order].real
    else:
        raise MiwError(f"unknown eigensolver method {method!r}")
    if not np.all(np.isfinite(w)):
        raise MiwError("eigensolver did not converge")
    psi, density = _publish(grid, v[:, 0])
    return EigenResult(E0=float(w[0]), psi0=psi, density=density, energies=np.asarray(w))


def reference_ground_state(grid, potential, m, use_analytic=True):
    """Analytic ground state for harmonic potentials, Numerov otherwise."""
    from miw.potentials import Harmonic

    if use_analytic and isinstance(potential, Harmonic):
        rho = GridField(grid, potential.ground_state_density(grid.nodes, m)).normalized()
        psi = np.sqrt(rho.values)
        return EigenResult(E0=potential.ground_state_energy(m), psi0=psi, density=rho)
    return ground_state(grid, potential, m)
