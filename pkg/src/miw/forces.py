"""Interworld potential, quantum forces and total-energy accounting.

For a kernel density ``P_i = sum_j P_ij`` evaluated at world i the
interworld potential is

    g_i^(k) = (hbar/2) P_i'^(k) / P_i,    U = sum_{i,k} (g_i^(k))^2 / 2m

and the forces are ``-dU/dx_n^(l)``. The derivative splits into four blocks:
the world's own density (same axis / other axes) and the densities of the
other worlds it contributes to (same axis / other axes). The cross-axis
blocks vanish identically in one dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from miw.constants import HBAR
from miw.density import check_sorted
from miw.errors import DimensionError, OrderingError, UnsupportedModeError
from miw.kernels import COINCIDENCE_RADIUS, kernel_variance, normalization_constant, pair_tables, profile, radial_integral
from miw.potentials import Harmonic

V_MODES = ("pointlike", "taylor2", "analytic")
MIN_GAP = 1e-9  # Å, divergence guard for the inverse-spacing method


@dataclass
class MiwForceField:
    kernel: object
    g: np.ndarray  # (N, K)
    U: float
    F: np.ndarray  # (N, K)
    n_coincident: int = 0


@dataclass
class EnergyReport:
    """Ensemble energies in eV. ``E_tot`` sums over all N worlds."""

    U_mw: float
    U_corr: float
    V_ext: float
    KE: float
    V_mode: str
    N: int = 1

    @property
    def E_tot(self):
        return self.U_mw + self.U_corr + self.V_ext + self.KE

    @property
    def per_world(self):
        return self.E_tot / self.N

    FIELDS = ("U_mw", "U_corr", "V_ext", "KE", "E_tot", "V_mode")

    def row(self):
        return [self.U_mw, self.U_corr, self.V_ext, self.KE, self.E_tot, self.V_mode]


def interworld(ensemble, kernel):
    if not kernel.is_kde:
        return interworld_original_1d(ensemble)
    if ensemble.D == 1:
        return _interworld_1d(ensemble, kernel)
    return interworld_general(ensemble, kernel)


def _interworld_1d(ensemble, kernel):
    """One-dimensional specialization of ``interworld_general`` on (N, N) tables."""
    x = ensemble.X[:, 0]
    N = len(x)
    m, b = ensemble.m, kernel.b
    r = x[:, None] - x[None, :]
    c0 = normalization_constant(kernel.family, 1, b) / N
    n_coincident = 0
    if kernel.family == "gaussian":
        Pij = c0 * np.exp(-r * r / (b * b))
        Pg = -2.0 / b**2 * r * Pij
        Pgg = (-2.0 / b**2 + 4.0 / b**4 * r * r) * Pij
    else:
        ar = np.abs(r)
        Pij = c0 * np.exp(-ar / b)
        close = ar < COINCIDENCE_RADIUS
        np.fill_diagonal(close, False)
        n_coincident = int(np.count_nonzero(close)) // 2
        Pg = -np.sign(r) / b * Pij
        Pgg = Pij / b**2
        Pg[close] = 0.0
        Pgg[close] = 0.0
    np.fill_diagonal(Pg, 0.0)
    np.fill_diagonal(Pgg, 0.0)
    P = Pij.sum(axis=1)
    G = Pg.sum(axis=1)
    S = Pgg.sum(axis=1)
    g = 0.5 * HBAR * G / P
    U = float(np.dot(g, g) / (2 * m))
    a = 0.5 * HBAR * g / (m * P)
    c = a * G / P
    dU = a * S - c * G - Pgg.T @ a + Pg.T @ c
    return MiwForceField(kernel=kernel, g=g[:, None], U=U, F=-dU[:, None], n_coincident=n_coincident)


def interworld_general(ensemble, kernel):
    m = ensemble.m
    t = pair_tables(ensemble.X, kernel)
    P = t.P.sum(axis=1)  # (N,)
    G = t.Pg.sum(axis=1)  # (N, D)
    S = t.H.sum(axis=1)  # (N, D, D), own-density curvature
    g = 0.5 * HBAR * G / P[:, None]
    U = float(np.sum(g * g) / (2 * m))

    D = ensemble.D
    diag = np.eye(D, dtype=bool)
    # a_i^k = dU/dG_i^k, c_i^k = -dU/dP_i split per axis k
    a = 0.5 * HBAR * g / (m * P[:, None])
    c = a * G / P[:, None]  # (N, D)
    Hd = np.where(diag, t.H, 0.0)
    Hx = t.H - Hd
    Sd = np.diagonal(S, axis1=1, axis2=2)  # (N, D)
    Sx = np.where(diag, 0.0, S)

    # own density, same axis (l = k)
    dU = a * Sd - c * G
    # other worlds' densities, same axis
    dU += -np.einsum("il,inl->nl", a, np.diagonal(Hd, axis1=2, axis2=3)) + np.einsum(
        "il,inl->nl", c, t.Pg
    )
    if D > 1:
        cs = c.sum(axis=1)
        # own density, other axes (k != l)
        dU += np.einsum("nk,nkl->nl", a, Sx) - (cs[:, None] - c) * G
        # other worlds' densities, other axes
        dU += -np.einsum("ik,inkl->nl", a, Hx) + np.einsum(
            "i,inl->nl", cs, t.Pg
        ) - np.einsum("il,inl->nl", c, t.Pg)
    return MiwForceField(kernel=kernel, g=g, U=U, F=-dU, n_coincident=t.n_coincident)


def interworld_original_1d(ensemble, boundary="one_sided"):
    """Five-world stencil potential of the inverse-spacing density.

    ``sigma_n = 1/(x_{n+1}-x_n) - 1/(x_n-x_{n-1})`` and
    ``U = hbar^2/(8m) sum_n sigma_n^2``. With ``boundary="one_sided"`` the end
    worlds keep their single inverse gap (the missing outer gap counts as
    infinite); with ``"interior"`` they carry no sigma term of their own and
    only feel their neighbours' terms.
    """
    if ensemble.D != 1:
        raise DimensionError("the inverse-spacing method is one-dimensional")
    if boundary not in ("one_sided", "interior"):
        raise UnsupportedModeError(f"unknown boundary convention {boundary!r}")
    x = check_sorted(ensemble.X)
    d = np.diff(x)
    if np.any(d < MIN_GAP):
        raise OrderingError(f"world gap below {MIN_GAP} Å")
    m = ensemble.m
    inv = 1.0 / d
    padded = np.concatenate([[0.0], inv, [0.0]])
    sigma = padded[1:] - padded[:-1]  # one per world
    if boundary == "interior":
        sigma[0] = sigma[-1] = 0.0
    pref = HBAR**2 / (8 * m)
    U = float(pref * np.sum(sigma * sigma))
    # gap j enters sigma_j with + and sigma_{j+1} with -
    dU_dinv = 2 * pref * (sigma[:-1] - sigma[1:])
    w = dU_dinv * inv * inv
    dU = np.zeros_like(x)
    dU[:-1] += w
    dU[1:] -= w
    g = 0.5 * HBAR * sigma
    return MiwForceField(kernel=None, g=g[:, None], U=U, F=-dU[:, None])


def internal_energy_correction(kernel, m, D=None):
    """Self-interaction energy of a single kernel treated as a continuum of worlds."""
    D = kernel.D if D is None else D
    if kernel.family == "gaussian":
        return HBAR**2 * D / (4 * m * kernel.b**2)
    if kernel.family == "exponential":
        return HBAR**2 * D / (8 * m * kernel.b**2)
    return 0.0


def kernel_self_interaction_quadrature(family, D, b, m):
    """``(hbar^2/8m) int |grad K|^2 / K`` for the normalized kernel, by radial quadrature."""
    c = normalization_constant(family, D, b)
    if family == "gaussian":
        # |d/dr K| = 2 r / b^2 K
        f = lambda r: c * profile(family, r / b) * (2 * r / b**2) ** 2
    else:
        f = lambda r: c * profile(family, r / b) / b**2
    return HBAR**2 / (8 * m) * radial_integral(f, D)


def external_terms(X, potential, kernel, mode="taylor2"):
    """External energy summed over worlds and its gradient with respect to X.

    ``taylor2`` smears each world with its kernel to second order,
    ``V_i = V(x_i) + (s^2/2) lap V(x_i)`` with s^2 the kernel's per-axis
    variance, and differentiates that expression consistently.
    """
    if mode not in V_MODES:
        raise UnsupportedModeError(f"unknown V mode {mode!r}")
    V, grad, lap = potential.evaluate(X)
    if mode == "pointlike" or kernel is None or not kernel.is_kde:
        return float(np.sum(V)), grad
    s2 = kernel_variance(kernel.family, potential.D, kernel.b)
    if mode == "taylor2":
        return float(np.sum(V + 0.5 * s2 * lap)), grad + 0.5 * s2 * potential.grad_laplacian(X)
    if not isinstance(potential, Harmonic) or kernel.family != "gaussian":
        raise UnsupportedModeError("analytic V mode needs a harmonic potential and gaussian kernel")
    # exact convolution of k/2 |x|^2 with a kernel of per-axis variance s2
    return float(np.sum(V + 0.5 * potential.k * potential.D * s2)), grad


def external_potential_energy(ensemble, potential, kernel, mode="taylor2"):
    return external_terms(ensemble.X, potential, kernel, mode)[0]


def kinetic_energy(ensemble):
    return float(0.5 * ensemble.m * np.sum(ensemble.V**2))


def _interworld_or_none(ensemble, kernel):
    if kernel is None:
        N, K = ensemble.X.shape
        return MiwForceField(kernel=None, g=np.zeros((N, K)), U=0.0, F=np.zeros((N, K)))
    return interworld(ensemble, kernel)


def total_energy(ensemble, potential, kernel, mode="taylor2", field=None):
    """Assemble ``E_tot = U_mw + U_corr + sum_i (V_i + m v_i^2 / 2)``.

    ``U_corr`` is the self-interaction of one kernel for the single quantum
    particle, so it is added once for the whole ensemble rather than per world.
    ``kernel=None`` means no interworld coupling at all.
    """
    if field is None:
        field = _interworld_or_none(ensemble, kernel)
    U_corr = internal_energy_correction(kernel, ensemble.m) if kernel is not None else 0.0
    return EnergyReport(
        U_mw=field.U,
        U_corr=U_corr,
        V_ext=external_potential_energy(ensemble, potential, kernel, mode),
        KE=kinetic_energy(ensemble),
        V_mode=mode,
        N=ensemble.N,
    )


class ForceModel:
    """Energy and force evaluator for a fixed potential, kernel and V mode.

    Calling it with an ensemble returns ``(F, report)`` where F includes the
    external and interworld forces. Evaluations are counted.
    """

    def __init__(self, potential, kernel, mode="taylor2"):
        if kernel is not None and kernel.is_kde and mode == "analytic":
            external_terms(np.zeros((1, potential.D)), potential, kernel, mode)
        self.potential = potential
        self.kernel = kernel
        self.mode = mode
        self.n_evals = 0

    def __call__(self, ensemble):
        self.n_evals += 1
        field = _interworld_or_none(ensemble, self.kernel)
        V_sum, grad = external_terms(ensemble.X, self.potential, self.kernel, self.mode)
        U_corr = internal_energy_correction(self.kernel, ensemble.m) if self.kernel is not None else 0.0
        report = EnergyReport(
            U_mw=field.U,
            U_corr=U_corr,
            V_ext=V_sum,
            KE=kinetic_energy(ensemble),
            V_mode=self.mode,
            N=ensemble.N,
        )
        return field.F - grad, report
