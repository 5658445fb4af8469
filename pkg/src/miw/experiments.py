"""Experiment drivers: energy scans, relaxations, thermal runs and tunneling rates.

Each driver takes a ``RunConfig`` and returns plain rows (lists of dicts) or
result objects; writing files is left to ``write_rows`` and the CLI.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from miw.constants import HBAR, KB, PROTON_MASS
from miw.density import (
    WorldEnsemble,
    kde_mass_below,
    sample_monte_carlo,
    sample_uniform_fill,
)
from miw.dynamics import IntegratorConfig, run
from miw.errors import MiwError
from miw.forces import ForceModel, interworld_original_1d, total_energy
from miw.grid import GridSpec
from miw.groundstate import RelaxProtocol, initial_configuration, relax
from miw.kernels import KernelSpec, bandwidth_amise, kernel_variance
from miw.numerov import ground_state, reference_ground_state
from miw.potentials import PRESETS, Harmonic, double_well_turning_point, preset

log = logging.getLogger(__name__)

EXPERIMENTS = ("energy_scan", "relax", "thermal", "tunnel", "numerov")
KERNEL_CHOICES = ("gaussian", "exponential", "original1d", "none")
OUT_ENV = "MIW_OUT_ROOT"


@dataclass
class RunConfig:
    experiment: str = "energy_scan"
    preset: str = "harm1"
    D: int = 1
    kernels: list = field(default_factory=lambda: ["gaussian", "exponential"])
    N: list = field(default_factory=lambda: [50])
    seeds: list = field(default_factory=lambda: [0])
    methods: list = field(default_factory=lambda: ["bfgs", "damped_md"])
    temperatures: list = field(default_factory=list)  # K
    integrator: dict = field(default_factory=dict)  # IntegratorConfig / run overrides
    protocol: dict = field(default_factory=dict)  # RelaxProtocol overrides
    out: str = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise MiwError(f"unknown experiment {self.experiment!r}")
        if self.preset not in PRESETS:
            raise MiwError(f"unknown preset {self.preset!r}")
        if self.D not in (1, 2, 3):
            raise MiwError(f"D must be 1, 2 or 3, got {self.D}")
        for k in self.kernels:
            if k not in KERNEL_CHOICES:
                raise MiwError(f"unknown kernel {k!r}")
        if any(int(n) < 2 for n in self.N):
            raise MiwError("every N must be at least 2")
        self.N = [int(n) for n in self.N]
        self.seeds = [int(s) for s in self.seeds]

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise MiwError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        """Short hash of the config, stamped into every output file.

        The output location is left out: it does not change the results.
        """
        fields = {k: v for k, v in self.to_dict().items() if k != "out"}
        blob = json.dumps(fields, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def output_dir(self):
        root = self.out or os.environ.get(OUT_ENV) or "results"
        return os.path.join(root, self.experiment)


def write_rows(path, rows, config=None, columns=None):
    """CSV with a ``# config=<hash>`` comment line and a header row."""
    if not rows:
        raise MiwError(f"nothing to write to {path}")
    columns = columns or list(rows[0])
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        if config is not None:
            fh.write(f"# config={config.digest()}\n")
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})


def map_jobs(fn, jobs, threads=1):
    """``[fn(*job) for job in jobs]``, optionally spread over worker processes.

    Every job carries its own seed, so results do not depend on ``threads``.
    """
    jobs = list(jobs)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ----------------------------------------------------------------------------
# energy vs N


def _reference(pot, D, m=PROTON_MASS, grid=None):
    grid = grid or GridSpec.default(D)
    return reference_ground_state(grid, pot, m)


def ideal_energy(pot, ref, kernel_family, X, m=PROTON_MASS, mode="taylor2"):
    """Static ensemble energy per world and the bandwidth used (NaN without one)."""
    ens = WorldEnsemble(X, m)
    if kernel_family == "original1d":
        U = interworld_original_1d(ens).U
        V = float(np.sum(pot.value(ens.X)))
        return (U + V) / ens.N, math.nan
    b = bandwidth_amise(ref.density, ens.N, ens.D, kernel_family)
    kernel = KernelSpec(kernel_family, b, ens.D)
    return total_energy(ens, pot, kernel, mode).per_world, b


def energy_scan(config, m=PROTON_MASS):
    pot = preset(config.preset, config.D)
    ref = _reference(pot, config.D, m)
    rows = []
    for fam in config.kernels:
        if fam == "original1d" and config.D != 1:
            continue
        for N in config.N:
            inits = [("uniform", None)] + [("mc", s) for s in config.seeds]
            for init, seed in inits:
                if init == "uniform":
                    X = sample_uniform_fill(ref.density, N)
                else:
                    X = sample_monte_carlo(ref.density, N, seed)
                try:
                    E, b = ideal_energy(pot, ref, fam, X, m)
                except MiwError as exc:
                    # coincident worlds make the inverse-spacing method undefined
                    log.debug("N=%d %s %s: %s", N, fam, init, exc)
                    E, b = math.inf, math.nan
                rows.append(
                    dict(
                        preset=config.preset, D=config.D, kernel=fam, init=init,
                        seed=-1 if seed is None else seed, N=N, b=b, E=E, E0=ref.E0,
                        E_err=abs(E - ref.E0), E_rel=abs(E - ref.E0) / abs(ref.E0),
                    )
                )
    return rows


def median_error(rows, kernel, init, N, key="E_rel"):
    vals = [r[key] for r in rows if r["kernel"] == kernel and r["init"] == init and r["N"] == N]
    return float(np.median(vals)) if vals else math.nan


# ----------------------------------------------------------------------------
# ground-state relaxation


def _relax_job(preset_name, D, fam, method, N, seed, protocol, m):
    pot = preset(preset_name, D)
    grid = GridSpec.default(D)
    ref = reference_ground_state(grid, pot, m)
    proto = RelaxProtocol.standard(method, D, **protocol)
    ens = initial_configuration(preset_name, D, N, seed, grid, m)
    report = relax(ens, pot, fam, proto, reference=ref.density, grid=grid)
    return dict(kernel=fam, method=method, N=N, seed=seed, report=report, E0=ref.E0)


def relax_experiment(config, m=PROTON_MASS, threads=1):
    """One RelaxReport per (kernel, method, N, seed)."""
    jobs = [
        (config.preset, config.D, fam, method, N, seed, config.protocol, m)
        for fam in config.kernels
        for method in config.methods
        for N in config.N
        for seed in config.seeds
    ]
    return map_jobs(_relax_job, jobs, threads)


def relax_rows(results):
    rows = []
    for res in results:
        for s in res["report"].sequences:
            rows.append(
                dict(
                    kernel=res["kernel"], method=res["method"], N=res["N"], seed=res["seed"],
                    sequence=s.index, E_tot=s.E_tot, E_per_world=s.E_per_world,
                    E_rel=(s.E_per_world - res["E0"]) / abs(res["E0"]), chi=s.chi, b=s.b,
                    force_evals=s.force_evals, energy_evals=s.energy_evals, max_force=s.max_force,
                )
            )
    return rows


# ----------------------------------------------------------------------------
# finite temperature


def thermal_sigma(T, k=1.0, m=PROTON_MASS):
    """Position spread of a thermal quantum harmonic oscillator (coth law)."""
    omega = math.sqrt(k / m)
    s0 = HBAR / (2 * m * omega)
    if T == 0:
        return math.sqrt(s0)
    return math.sqrt(s0 / math.tanh(HBAR * omega / (2 * KB * T)))


THERMAL_DEFAULTS = dict(gamma=0.1, dt=0.1, t_equil=500.0, t_sample=3000.0, sample_every=5.0)


def thermal_run(kernel_family, T, seed=0, N=30, k=1.0, m=PROTON_MASS, **overrides):
    """Time-averaged ensemble spread of N worlds in ``k/2 x^2`` at temperature T.

    Worlds start on the ground-state density (uniform fill) with a bandwidth
    fixed by AMISE against it; velocities start Maxwell-Boltzmann at T.
    """
    opts = {**THERMAL_DEFAULTS, **overrides}
    pot = Harmonic(D=1, k=k)
    grid = GridSpec.default(1)
    ref = reference_ground_state(grid, pot, m)
    X = sample_uniform_fill(ref.density, N)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal(X.shape) * math.sqrt(KB * T / m)
    ens = WorldEnsemble(X, m, V)
    kernel = None
    if kernel_family != "none":
        kernel = KernelSpec(kernel_family, bandwidth_amise(ref.density, N, 1, kernel_family), 1)
    dt = opts["dt"]
    stride = max(1, int(round(opts["sample_every"] / dt)))
    cfg = IntegratorConfig(
        dt0=dt, dt_max=dt, gamma=opts["gamma"], T=T, seed=seed, thermostat="langevin", adaptive=False,
        steps=int(round(opts["t_equil"] / dt)),
    )
    model = ForceModel(pot, kernel)
    run(ens, pot, kernel, cfg, forces_fn=model, rng=rng)
    cfg.steps = int(round(opts["t_sample"] / dt))
    traj = run(ens, pot, kernel, cfg, stride=stride, forces_fn=model, rng=rng)
    pos = traj.positions()[:, :, 0]
    sigma = float(math.sqrt(np.mean(pos**2)))
    s2 = kernel_variance(kernel_family, 1, kernel.b) if kernel else 0.0
    return dict(
        kernel=kernel_family, T=T, seed=seed, N=N,
        sigma=sigma,
        sigma_kde=math.sqrt(sigma**2 + s2),  # spread of the smoothed density
        sigma_ref=thermal_sigma(T, k, m),
        sigma_classical=math.sqrt(KB * T / k),
        b=kernel.b if kernel else math.nan,
    )


def thermal_experiment(config, m=PROTON_MASS, threads=1):
    temps = config.temperatures or [0, 100, 300, 600, 1000, 1500, 2000]
    N = config.N[0] if config.N else 30
    fn = functools.partial(thermal_run, N=N, m=m, **config.integrator)
    jobs = [(fam, float(T), seed) for fam in config.kernels for T in temps for seed in config.seeds]
    return map_jobs(fn, jobs, threads)


# ----------------------------------------------------------------------------
# tunneling


def bell_beta(spec, m=PROTON_MASS):
    """Bell tunneling parameter from the turning point at the well's zero-point energy."""
    a = double_well_turning_point(spec, spec.zero_point_energy(m))
    return a * math.pi * math.sqrt(2 * m * spec.barrier) / HBAR


def arrhenius_rate(T, nu0, dE):
    return nu0 * np.exp(-dE / (KB * np.asarray(T, dtype=float)))


def bell_rate(T, nu0, dE, beta):
    """Quantum-corrected jump rate over a parabolic barrier."""
    x = dE / (KB * np.asarray(T, dtype=float))
    return nu0 * (beta * np.exp(-x) - x * np.exp(-beta)) / (beta - x)


def _decay(t, f0, lam):
    return 0.5 + (f0 - 0.5) * np.exp(-lam * t)


def fit_decay(t, f):
    """Fit ``f = 0.5 + (f0 - 0.5) exp(-lam t)``; returns (lam, stderr, f0, ok)."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    f_start = float(np.clip(f[0], 0.55, 1.0))
    excess = (f - 0.5) / (f_start - 0.5)
    below = np.flatnonzero(excess < math.exp(-1))
    lam0 = 1.0 / t[below[0]] if len(below) and t[below[0]] > 0 else 1.0 / max(t[-1], 1e-9)
    try:
        popt, pcov = curve_fit(
            _decay, t, f, p0=(f_start, lam0), bounds=([0.5, 0.0], [1.5, 10.0]), maxfev=5000
        )
    except (RuntimeError, ValueError):
        return math.nan, math.nan, math.nan, False
    err = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else math.nan
    ok = bool(popt[1] > 0 and np.isfinite(err))
    return float(popt[1]), err, float(popt[0]), ok


TUNNEL_DEFAULTS = dict(
    N=50, gamma=0.1, dt=0.2, sample_every=2.0, chunk=1000.0, t_min=1000.0,
    t_max_kernel=20000.0, t_max_none=100000.0, settle=4.0,
)


@dataclass
class TunnelTrace:
    kernel: str
    T: float
    seed: int
    times: np.ndarray
    f_count: np.ndarray
    f_kde: np.ndarray
    b: float

    @property
    def signal(self):
        return self.f_count if self.kernel == "none" else self.f_kde


def _tunnel_start(spec, N, m):
    left = Harmonic(D=1, k=spec.k, center=(-spec.x0,))
    grid = GridSpec.default(1)
    rho = reference_ground_state(grid, left, m).density
    return rho, sample_uniform_fill(rho, N)


def tunnel_run(kernel_family, T, seed=0, spec=None, m=PROTON_MASS, **overrides):
    """Left-well population of N worlds released in the left well at temperature T.

    Runs in chunks and stops early once a decay fit says the population has
    relaxed (``lam * t > settle``), or at the kernel's time cap.
    """
    opts = {**TUNNEL_DEFAULTS, **overrides}
    spec = spec or preset("dwell")
    rho, X = _tunnel_start(spec, opts["N"], m)
    rng = np.random.default_rng([seed, int(round(T))])
    ens = WorldEnsemble(X, m, rng.standard_normal(X.shape) * math.sqrt(KB * T / m))
    kernel = None
    if kernel_family != "none":
        kernel = KernelSpec(kernel_family, bandwidth_amise(rho, opts["N"], 1, kernel_family), 1)
    dt = opts["dt"]
    stride = max(1, int(round(opts["sample_every"] / dt)))
    chunk_steps = stride * max(1, int(round(opts["chunk"] / (stride * dt))))
    t_max = opts["t_max_none"] if kernel is None else opts["t_max_kernel"]
    cfg = IntegratorConfig(
        dt0=dt, dt_max=dt, gamma=opts["gamma"], T=T, seed=seed, thermostat="langevin",
        adaptive=False, steps=chunk_steps,
    )
    model = ForceModel(spec, kernel)
    times, f_count, f_kde = [], [], []
    t0 = 0.0
    while True:
        traj = run(ens, spec, kernel, cfg, stride=stride, forces_fn=model, rng=rng)
        first = 0 if not times else 1  # chunk starts repeat the previous end state
        for t, Xs in zip(traj.times[first:], traj.snapshots[first:]):
            times.append(t0 + t)
            f_count.append(float(np.mean(Xs[:, 0] < 0)))
            if kernel is not None:
                f_kde.append(kde_mass_below(WorldEnsemble(Xs, m), kernel, 0.0))
        t0 = times[-1]
        if t0 >= opts["t_min"]:
            sig = f_count if kernel is None else f_kde
            lam, _, _, ok = fit_decay(times, sig)
            if ok and lam * t0 > opts["settle"]:
                break
        if t0 >= t_max:
            break
    nan = np.full(len(times), math.nan)
    return TunnelTrace(
        kernel=kernel_family, T=T, seed=seed, times=np.array(times), f_count=np.array(f_count),
        f_kde=np.array(f_kde) if f_kde else nan, b=kernel.b if kernel else math.nan,
    )


@dataclass
class RateFitResult:
    rows: list  # per (kernel, T): T, lam, nu, stderr, n_ok
    seed_rows: list  # per (kernel, T, seed)
    nu0: float  # fs^-1, from the kernel-free runs
    nu0_r2: float
    dE_free: float  # eV, barrier from a free-slope Arrhenius fit (diagnostic)
    beta: float
    gamma: float
    dE: float

    def model_rows(self, temps):
        temps = np.asarray(temps, dtype=float)
        nc = arrhenius_rate(temps, self.nu0, self.dE)
        nq = bell_rate(temps, self.nu0, self.dE, self.beta)
        return [dict(T=float(t), nu_classical=float(a), nu_quantum=float(q)) for t, a, q in zip(temps, nc, nq)]

    def rate(self, kernel, T):
        for r in self.rows:
            if r["kernel"] == kernel and r["T"] == T:
                return r["nu"]
        return math.nan


def fit_arrhenius(T, nu, dE):
    """Prefactor of ``nu0 exp(-dE/kT)`` at fixed dE by least squares in log space.

    Returns ``(nu0, r2, dE_free)`` where r2 is the coefficient of determination
    of log(nu) and dE_free the barrier of an unconstrained straight-line fit.
    """
    T = np.asarray(T, dtype=float)
    y = np.log(np.asarray(nu, dtype=float))
    x = 1.0 / (KB * T)
    ln_nu0 = float(np.mean(y + dE * x))
    resid = y - (ln_nu0 - dE * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else math.nan
    slope = np.polyfit(x, y, 1)[0] if len(T) > 1 else math.nan
    return math.exp(ln_nu0), r2, -float(slope)


def tunnel_experiment(config, m=PROTON_MASS, traces_out=None, threads=1):
    spec = preset("dwell")
    temps = config.temperatures or list(range(300, 1501, 150))
    opts = dict(config.integrator)
    fn = functools.partial(tunnel_run, spec=spec, m=m, **opts)
    jobs = [(fam, float(T), seed) for fam in config.kernels for T in temps for seed in config.seeds]
    traces = map_jobs(fn, jobs, threads)
    seed_rows = []
    for (fam, T, seed), tr in zip(jobs, traces):
        if traces_out is not None:
            traces_out.append(tr)
        lam, err, f0, ok = fit_decay(tr.times, tr.signal)
        seed_rows.append(
            dict(kernel=fam, T=T, seed=seed, lam=lam, nu=lam / 2, stderr=err / 2,
                 f0=f0, ok=ok, t_end=float(tr.times[-1]), b=tr.b,
                 f_count_end=float(tr.f_count[-1]), f_kde_end=float(tr.f_kde[-1]))
        )
    rows = []
    for fam in config.kernels:
        for T in temps:
            sel = [r for r in seed_rows if r["kernel"] == fam and r["T"] == float(T) and r["ok"]]
            lams = np.array([r["lam"] for r in sel])
            lam = float(np.median(lams)) if len(lams) else math.nan
            se = float(np.std(lams, ddof=1) / math.sqrt(len(lams))) if len(lams) > 1 else math.nan
            rows.append(dict(kernel=fam, T=float(T), lam=lam, nu=lam / 2, stderr=se / 2, n_ok=len(sel)))
    base = [r for r in rows if r["kernel"] == "none" and np.isfinite(r["nu"]) and r["nu"] > 0]
    nu0 = r2 = dE_free = math.nan
    if len(base) >= 2:
        nu0, r2, dE_free = fit_arrhenius([r["T"] for r in base], [r["nu"] for r in base], spec.barrier)
    gamma = opts.get("gamma", TUNNEL_DEFAULTS["gamma"])
    return RateFitResult(
        rows=rows, seed_rows=seed_rows, nu0=nu0, nu0_r2=r2, dE_free=dE_free,
        beta=bell_beta(spec, m), gamma=gamma, dE=spec.barrier,
    )


# ----------------------------------------------------------------------------
# reference eigensolver


def numerov_solve(config, m=PROTON_MASS, method="symmetric"):
    pot = preset(config.preset, config.D)
    grid = GridSpec.default(config.D)
    res = ground_state(grid, pot, m, method=method)
    row = dict(preset=config.preset, D=config.D, points=grid.points, E0=res.E0)
    if isinstance(pot, Harmonic):
        exact = pot.ground_state_energy(m)
        row.update(E_exact=exact, rel_err=(res.E0 - exact) / exact)
    return res, row
