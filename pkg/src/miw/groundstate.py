"""Ground-state search by damped MD or BFGS with periodic reinitialization.

A relaxation runs a fixed number of sequences. Between sequences the worlds
are redistributed from their own kernel density (deterministic uniform fill)
and the bandwidth is refreshed by AMISE against that density, so the
objective is fixed within a sequence and changes only at its boundaries.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search

from miw.density import (
    WorldEnsemble,
    density_on_grid,
    rss_error,
    sample_uniform_fill,
)
from miw.dynamics import IntegratorConfig, run, write_binary
from miw.errors import DivergenceError, MiwError
from miw.forces import ForceModel
from miw.grid import GridSpec
from miw.kernels import KernelSpec, bandwidth_amise, bandwidth_silverman
from miw.potentials import Harmonic, LennardJonesAngular, preset

log = logging.getLogger(__name__)


@dataclass
class RelaxProtocol:
    method: str = "bfgs"
    sequences: int = 10
    steps_per_seq: int = 1000
    max_iter_per_seq: int = 40
    force_tol: float = 1e-5  # eV/Å
    dt_max: float = 0.05  # fs
    dt0: float = None  # fs; None means dt_max for kernels, 1e-3 for original1d
    gamma: float = 1.0  # 1/fs
    V_mode: str = "taylor2"
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.method not in ("damped_md", "bfgs"):
            raise MiwError(f"unknown relaxation method {self.method!r}")
        if min(self.sequences, self.steps_per_seq, self.max_iter_per_seq) < 1:
            raise MiwError("protocol counts must be at least 1")
        if not self.force_tol > 0:
            raise MiwError("force_tol must be positive")

    @classmethod
    def standard(cls, method, D=1, **overrides):
        """Default protocol for dimension D: dt_max is 0.03 fs in 3D and 0.05 fs otherwise."""
        dt_max = 0.03 if D == 3 else 0.05
        return cls(method=method, dt_max=dt_max, **overrides)


@dataclass
class SequenceRecord:
    index: int
    E_tot: float  # whole ensemble, eV
    E_per_world: float
    chi: float
    b: float
    force_evals: int  # cumulative
    energy_evals: int  # cumulative
    max_force: float
    converged: bool = False


@dataclass
class RelaxReport:
    sequences: list = field(default_factory=list)
    ensemble: WorldEnsemble = None
    kernel: KernelSpec = None
    md_energies: list = field(default_factory=list)  # per step, damped MD only
    line_search_failures: int = 0

    @property
    def force_evals(self):
        return self.sequences[-1].force_evals if self.sequences else 0

    @property
    def energy_evals(self):
        return self.sequences[-1].energy_evals if self.sequences else 0

    @property
    def chis(self):
        return np.array([s.chi for s in self.sequences])

    @property
    def energies(self):
        return np.array([s.E_per_world for s in self.sequences])

    COLUMNS = ("sequence", "E_tot", "E_per_world", "chi", "b", "force_evals", "energy_evals", "max_force")

    def to_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for s in self.sequences:
                w.writerow([s.index, repr(s.E_tot), repr(s.E_per_world), repr(s.chi), repr(s.b),
                            s.force_evals, s.energy_evals, repr(s.max_force)])

    def final_ensemble_to_binary(self, path):
        write_binary(path, [0.0], [self.ensemble.X], 1)


@dataclass
class BfgsResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    evals: int
    converged: bool
    line_search_failed: bool = False


def bfgs_minimize(x0, f, g, max_iter=40, tol=1e-5, max_backtracks=10):
    """Minimize ``f`` with BFGS (inverse-Hessian form) and a strong Wolfe line search.

    Converges when ``max|g| < tol``. If the Wolfe search fails, a backtracking
    (sufficient decrease only) step along the same direction is
    tried, then along steepest descent, and ``line_search_failed`` is set;
    when neither finds a decrease the search stops where it is.
    ``f`` and ``g`` are called on the same points by the line search, so the
    evaluation count is the number of distinct points visited.
    """
    cache = {}

    def fg(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = (float(f(x)), np.asarray(g(x), dtype=float))
            fg.count += 1
        return cache[key]

    def backtrack(x, fx, gx, p, alpha):
        slope = float(np.dot(gx, p))
        for _ in range(max_backtracks):
            f_try, g_try = fg(x + alpha * p)
            if f_try <= fx + 1e-4 * alpha * slope:
                return alpha, f_try, g_try
            alpha *= 0.5
        return None, None, None

    fg.count = 0
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    fx, gx = fg(x)
    Hinv = None
    failed = False
    it = 0
    while it < max_iter and np.max(np.abs(gx)) >= tol:
        it += 1
        p = -gx if Hinv is None else -Hinv @ gx
        if Hinv is None:
            # no curvature yet: cap the first displacement at 0.1
            p = p * min(1.0, 0.1 / np.max(np.abs(p)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # non-convergence is handled below
            alpha, _, _, f_new, _, g_new = line_search(
                lambda z: fg(z)[0], lambda z: fg(z)[1], x, p, gfk=gx, old_fval=fx,
                c1=1e-4, c2=0.9, maxiter=10,
            )
        if alpha is None:
            # typically a kink in f (coalescing worlds): settle for sufficient decrease
            failed = True
            alpha, f_new, g_new = backtrack(x, fx, gx, p, 1.0)
            if alpha is None:
                p = -gx * min(1.0, 0.1 / np.max(np.abs(gx)))
                alpha, f_new, g_new = backtrack(x, fx, gx, p, 1.0)
                Hinv = None
            if alpha is None:
                break
        s = alpha * p
        x_new = x + s
        if g_new is None:
            f_new, g_new = fg(x_new)
        y = g_new - gx
        sy = float(np.dot(s, y))
        if sy > 0:
            if Hinv is None:
                Hinv = np.eye(n) * (sy / float(np.dot(y, y)))
            rho = 1.0 / sy
            Hy = Hinv @ y
            Hinv += (rho * rho * np.dot(y, Hy) + rho) * np.outer(s, s) - rho * (np.outer(s, Hy) + np.outer(Hy, s))
        x, fx, gx = x_new, f_new, g_new
    return BfgsResult(
        x=x, f=fx, g=gx, iterations=it, evals=fg.count,
        converged=bool(np.max(np.abs(gx)) < tol), line_search_failed=failed,
    )


def _box_truncated_gaussian(center, width, N, grid, rng):
    center = np.asarray(center, dtype=float)
    half = np.minimum(center - grid.lo, grid.hi - center)
    out = np.empty((0, len(center)))
    while len(out) < N:
        draw = center + width * rng.standard_normal((2 * N, len(center)))
        keep = np.all(np.abs(draw - center) <= half, axis=1)
        out = np.concatenate([out, draw[keep]])
    return out[:N]


def initial_configuration(preset_name, D, N, seed=0, grid=None, m=None, width=0.5):
    """Starting ensemble for a relaxation, with zero velocities.

    Harmonic presets in 1D/2D draw uniformly over the box; lj1 in 1D/2D and every
    preset in 3D draw from a Gaussian of the given width at the classical
    minimum, truncated symmetrically about the minimum to stay in the box.
    """
    from miw.constants import PROTON_MASS

    m = PROTON_MASS if m is None else m
    grid = grid or GridSpec.default(D)
    pot = preset(preset_name, D)
    rng = np.random.default_rng(seed)
    if isinstance(pot, Harmonic) and D < 3:
        X = rng.uniform(grid.lo, grid.hi, size=(N, D))
    elif isinstance(pot, (Harmonic, LennardJonesAngular)):
        center = pot.classical_minimum() if isinstance(pot, LennardJonesAngular) else np.asarray(pot.center)
        X = _box_truncated_gaussian(center, width, N, grid, rng)
    else:
        raise MiwError(f"no initial configuration rule for preset {preset_name!r}")
    if D == 1:
        X = np.sort(X, axis=0)
    return WorldEnsemble(X, m)


def _energy_grad_fns(model, ensemble):
    shape = ensemble.X.shape

    def at(x):
        ens = ensemble.copy(X=x.reshape(shape), V=np.zeros(shape))
        return model(ens)

    last = {}

    def both(x):
        key = x.tobytes()
        if key not in last:
            last.clear()
            F, rep = at(x)
            last[key] = (rep.E_tot, -F.ravel())
        return last[key]

    return (lambda x: both(x)[0]), (lambda x: both(x)[1])


def relax(ensemble, potential, kernel_family, protocol, reference=None, grid=None, b0=None):
    """Relax an ensemble towards the interacting-worlds ground state."""
    grid = grid or (reference.grid if reference is not None else GridSpec.default(ensemble.D))
    ens = ensemble.copy(V=np.zeros_like(ensemble.X))
    N, D = ens.N, ens.D
    kde = kernel_family in ("gaussian", "exponential")
    if kde:
        b = b0 if b0 is not None else bandwidth_silverman(ens.X)
        kernel = KernelSpec(kernel_family, b, D)
    else:
        kernel = KernelSpec(kernel_family, 1.0, D)
    report = RelaxReport(kernel=kernel)
    force_evals = energy_evals = 0
    prev_E = None

    for seq in range(protocol.sequences):
        if seq > 0 and kde:
            current = density_on_grid(ens, kernel, grid).normalized()
            X = sample_uniform_fill(current, N)
            b = bandwidth_amise(current, N, D, kernel_family)
            kernel = kernel.with_bandwidth(b)
            ens = ens.copy(X=X, V=np.zeros_like(X))
        model = ForceModel(potential, kernel, protocol.V_mode)
        converged = False
        if protocol.method == "bfgs":
            f, g = _energy_grad_fns(model, ens)
            res = bfgs_minimize(ens.X.ravel(), f, g, protocol.max_iter_per_seq, protocol.force_tol)
            ens = ens.copy(X=res.x.reshape(ens.X.shape), V=np.zeros_like(ens.X))
            report.line_search_failures += int(res.line_search_failed)
            converged = res.converged
            force_evals += res.evals
            energy_evals += res.evals
        else:
            dt0 = protocol.dt0 if protocol.dt0 is not None else (protocol.dt_max if kde else 1e-3)
            cfg = IntegratorConfig(
                dt0=min(dt0, protocol.dt_max), dt_max=protocol.dt_max, gamma=protocol.gamma,
                T=0.0, steps=protocol.steps_per_seq, seed=seq, thermostat="langevin",
            )
            traj = run(ens, potential, kernel, cfg, stride=1, forces_fn=model)
            report.md_energies.extend(r.E_tot for r in traj.energies[1:])
            ens.V[:] = 0.0
            force_evals += protocol.steps_per_seq
            energy_evals += protocol.steps_per_seq
        F, rep = model(ens)
        E = rep.E_tot
        # a rise, not a fall: E_tot is negative in bound wells and may cross zero
        scale = max(abs(prev_E), 1e-3 * N) if prev_E is not None else 0.0  # floor: 1 meV per world
        if prev_E is not None and E - prev_E > (protocol.divergence_factor - 1) * scale:
            raise DivergenceError(
                f"energy grew from {prev_E:.4g} to {E:.4g} eV in sequence {seq}",
                diagnostics={"sequence": seq, "E_prev": prev_E, "E": E, "b": kernel.b},
            )
        prev_E = E
        chi = math.nan
        if reference is not None and kde:
            chi = rss_error(density_on_grid(ens, kernel, grid).normalized(), reference)
        report.sequences.append(
            SequenceRecord(
                index=seq, E_tot=E, E_per_world=E / N, chi=chi, b=kernel.b if kde else math.nan,
                force_evals=force_evals, energy_evals=energy_evals,
                max_force=float(np.max(np.abs(F))), converged=converged,
            )
        )
        log.debug("sequence %d: E/N=%.6g chi=%.4g b=%.4g", seq, E / N, chi, kernel.b)
    report.ensemble = ens
    report.kernel = kernel
    return report
