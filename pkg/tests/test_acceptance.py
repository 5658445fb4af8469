"""Acceptance criteria, one test each, run at their stated tolerances.

Every test records a single PASS/FAIL line (shown in the terminal summary)
before asserting, so a failing criterion still reports what it measured.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from miw.constants import HBAR, KB, PROTON_MASS
from miw.density import WorldEnsemble, sample_uniform_fill
from miw.dynamics import IntegratorConfig, run
from miw.experiments import (
    RunConfig,
    bell_beta,
    bell_rate,
    energy_scan,
    median_error,
    relax_experiment,
    thermal_run,
    thermal_sigma,
    tunnel_experiment,
)
from miw.forces import (
    internal_energy_correction,
    interworld,
    interworld_original_1d,
    kernel_self_interaction_quadrature,
)
from miw.grid import GridField, GridSpec
from miw.kernels import KernelSpec, bandwidth_amise, sphere_area
from miw.numerov import ground_state
from miw.potentials import PotentialSpec, preset

from conftest import fd_gradient

m = PROTON_MASS


def test_criterion_1_force_correctness(record):
    t0 = time.perf_counter()
    worst = {}
    rng = np.random.default_rng(2024)
    cases = [(f, D) for f in ("gaussian", "exponential") for D in (1, 2, 3)] + [("original1d", 1)]
    for family, D in cases:
        for N in (4, 16):
            err = 0.0
            for _ in range(50):
                if family == "original1d":
                    X = np.sort(rng.uniform(-1, 1, size=N))[:, None]
                    ens = WorldEnsemble(X, m)
                    F = interworld_original_1d(ens).F
                    h = 1e-4 * float(np.min(np.diff(X[:, 0])))
                    U = lambda Y: interworld_original_1d(WorldEnsemble(Y, m)).U
                else:
                    X = rng.normal(scale=0.4, size=(N, D))
                    k = KernelSpec(family, float(rng.uniform(0.15, 0.6)), D)
                    F = interworld(WorldEnsemble(X, m), k).F
                    h = 1e-6
                    U = lambda Y, k=k: interworld(WorldEnsemble(Y, m), k).U
                fd = -fd_gradient(U, X, h)
                err = max(err, float(np.max(np.abs(F - fd)) / np.max(np.abs(fd))))
            worst[(family, D, N)] = err
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = max(worst.values()) < 1e-6 and elapsed < 60
    record(1, ok, f"max rel force error {worst[top]:.1e} at {top} (tol 1e-6), {elapsed:.0f} s (limit 60 s)")
    assert ok


def test_criterion_2_exponential_normalization(record):
    b = 0.37
    errs = []
    for D in (1, 2, 3):
        val, _ = integrate.quad(lambda r: math.exp(-r / b) * r ** (D - 1), 0, np.inf, epsabs=1e-14, epsrel=1e-12)
        quad_total = sphere_area(D) * val
        closed = math.factorial(D - 1) * b**D * sphere_area(D)
        errs.append(abs(quad_total - closed) / closed)
    one_d = sphere_area(1) * math.factorial(0) * b
    ok = max(errs) < 1e-6 and one_d == 2 * b
    record(2, ok, f"max quadrature rel error {max(errs):.1e} (tol 1e-6), 1D integral {one_d} vs 2b={2 * b}")
    assert ok


def test_criterion_3_internal_energy_correction(record):
    b = 0.21
    errs = {}
    for family in ("gaussian", "exponential"):
        for D in (1, 2, 3):
            q = kernel_self_interaction_quadrature(family, D, b, m)
            formula = internal_energy_correction(KernelSpec(family, b, D), m)
            errs[(family, D)] = abs(q - formula) / formula
    bad = {k: round(v, 3) for k, v in errs.items() if v >= 0.01}
    ok = not bad
    record(3, ok, f"quadrature vs closed form, max rel error {max(errs.values()):.3f} (tol 0.01); off: {bad or 'none'}")
    assert ok


class _Flat(PotentialSpec):
    def __init__(self, D):
        object.__setattr__(self, "D", D)

    def _evaluate(self, x):
        return np.zeros(len(x)), np.zeros_like(x), np.zeros(len(x))


def test_criterion_4_numerov_accuracy(record):
    t0 = time.perf_counter()
    errs = {}
    for D, points, tol in ((1, 200, 1e-3), (2, 40, 1e-2), (3, 15, 3e-2)):
        pot = preset("harm1", D)
        exact = pot.ground_state_energy(m)
        E0 = ground_state(GridSpec(-2, 2, points, D), pot, m).E0
        errs[f"harm1 {D}D"] = (abs(E0 - exact) / exact, tol)
    grid = GridSpec(-2, 2, 200, 1)
    exact = HBAR**2 * math.pi**2 / (2 * m * (grid.hi - grid.lo) ** 2)
    E0 = ground_state(grid, _Flat(1), m).E0
    errs["square well"] = (abs(E0 - exact) / exact, 5e-3)
    elapsed = time.perf_counter() - t0
    ok = all(e < tol for e, tol in errs.values()) and elapsed < 120
    detail = ", ".join(f"{k} {e:.1e}/{tol:g}" for k, (e, tol) in errs.items())
    record(4, ok, f"{detail}; {elapsed:.0f} s (limit 120 s)")
    assert ok


def test_criterion_5_energy_vs_n(record):
    seeds = list(range(10))
    notes, ok = [], True
    for name in ("harm1", "harm10"):
        rows = energy_scan(RunConfig(preset=name, kernels=["exponential"], N=[10, 50, 100], seeds=seeds))
        e10, e50, e100 = (median_error(rows, "exponential", "mc", N) for N in (10, 50, 100))
        good = e50 <= e10 and e100 <= 2 * e50
        ok &= good
        notes.append(f"{name} exp N10/50/100 {e10:.3f}/{e50:.3f}/{e100:.3f}")
    grid_N = [2, 5, 10, 20, 50, 100, 150, 200]
    rows = energy_scan(RunConfig(preset="harm1", kernels=["original1d"], N=grid_N, seeds=seeds))
    e = np.array([median_error(rows, "original1d", "mc", N) for N in grid_N])
    e50 = e[grid_N.index(50)]
    diverges = all(e[grid_N.index(N)] > e50 for N in (150, 200))
    step = np.diff(e)
    non_monotone = bool(np.any(step > 0) and np.any(step < 0))
    ok &= diverges and non_monotone
    notes.append(f"original1d MC diverges past N=50: {diverges}, non-monotone: {non_monotone} "
                 f"(N {'/'.join(map(str, grid_N))}: {'/'.join(f'{v:.2g}' for v in e)})")
    record(5, ok, "; ".join(notes))
    assert ok


@pytest.mark.slow
def test_criterion_6_ground_state_search(record):
    t0 = time.perf_counter()
    seeds = list(range(5))
    bfgs_max, md_min, chi_bad, energy = (0, None), (math.inf, None), [], {}
    for name in ("harm1", "harm10", "lj1"):
        for D in (1, 2, 3):
            cfg = RunConfig(experiment="relax", preset=name, D=D, kernels=["gaussian", "exponential"],
                            methods=["bfgs", "damped_md"], N=[50], seeds=seeds)
            results = relax_experiment(cfg)
            for fam in cfg.kernels:
                for method in cfg.methods:
                    sel = [r for r in results if r["kernel"] == fam and r["method"] == method]
                    tag = f"{name} {D}D {fam} {method}"
                    evals = [r["report"].force_evals for r in sel]
                    if method == "bfgs" and max(evals) > bfgs_max[0]:
                        bfgs_max = (max(evals), tag)
                    if method == "damped_md" and min(evals) < md_min[0]:
                        md_min = (min(evals), tag)
                    chi = np.median([r["report"].chis for r in sel], axis=0)[-5:]
                    if np.any(np.diff(chi) > 0):
                        chi_bad.append(tag)
                    if name == "harm1" and D == 1:
                        E = [(r["report"].energies[-1] - r["E0"]) / abs(r["E0"]) for r in sel]
                        energy[f"{fam} {method}"] = float(np.median(E))
    elapsed = time.perf_counter() - t0
    ok_evals = bfgs_max[0] < 2000 < md_min[0]
    ok_energy = all(abs(v) < 0.1 for v in energy.values())
    ok_chi = not chi_bad
    ok_time = elapsed < 600
    ok = ok_evals and ok_energy and ok_chi and ok_time
    record(
        6, ok,
        f"evals ok={ok_evals} (bfgs max {bfgs_max[0]} at {bfgs_max[1]}, md min {md_min[0]}); "
        f"harm1 1D E ok={ok_energy} ({', '.join(f'{k} {v:+.3f}' for k, v in energy.items())}); "
        f"chi non-increasing ok={ok_chi} ({len(chi_bad)}/36 combos rise: {', '.join(chi_bad) or 'none'}); "
        f"{elapsed:.0f} s (limit 600 s)",
    )
    assert ok


def test_criterion_7_two_world_shapes(record):
    b = 0.2
    r = np.linspace(0, 6 * b, 241)
    prof = {}
    for family in ("gaussian", "exponential"):
        U = []
        for s in r:
            X = np.array([[0.0], [s]])
            U.append(interworld(WorldEnsemble(X, m), KernelSpec(family, b, 1)).U)
        prof[family] = np.array(U)
    # gaussian: dU/dr -> 0 as r -> 0 (stationary point), sign change of the slope further out
    slope = np.diff(prof["gaussian"]) / np.diff(r)
    ok_g = abs(slope[0]) < 0.05 * np.max(np.abs(slope)) and slope[1] > 0 and slope[-1] < 0
    # exponential: U falls for every separation > 0 and the slope is largest at contact
    slope_e = np.diff(prof["exponential"][1:]) / np.diff(r[1:])
    ok_e = bool(np.all(slope_e < 0)) and abs(slope_e[0]) == np.max(np.abs(slope_e))
    ok = ok_g and ok_e
    record(7, ok, f"gaussian stationary at 0: {ok_g} (|slope0|/max {abs(slope[0]) / np.max(np.abs(slope)):.3f}); "
                  f"exponential strictly repulsive with cusp: {ok_e}")
    assert ok


@pytest.mark.slow
def test_criterion_8_tunneling(record):
    t0 = time.perf_counter()
    cfg = RunConfig(experiment="tunnel", preset="dwell", kernels=["none", "gaussian", "exponential"],
                    N=[50], seeds=list(range(5)))
    fit = tunnel_experiment(cfg)
    elapsed = time.perf_counter() - t0
    temps = sorted({r["T"] for r in fit.rows})
    nu = {k: np.array([fit.rate(k, T) for T in temps]) for k in cfg.kernels}
    T = np.array(temps)
    beta = bell_beta(preset("dwell"))
    ok_beta = abs(beta - 1.77) <= 0.05
    ok_arr = fit.nu0_r2 > 0.95 and fit.gamma / 2 <= fit.nu0 <= 2 * fit.gamma
    low = T <= 900
    ok_exp = bool(np.all(nu["exponential"][low] > nu["none"][low]))
    mid = T <= 600
    ok_between = bool(np.all((nu["gaussian"][mid] > nu["none"][mid]) & (nu["gaussian"][mid] < nu["exponential"][mid])))
    nq = bell_rate(T, fit.nu0, fit.dE, beta)
    gap = np.abs(np.log(nu["gaussian"] / nq))
    hi = T >= 750
    ok_catch = bool(np.nanmean(gap[hi]) < np.nanmean(gap[mid]))
    ok_time = elapsed < 1800
    ok = ok_beta and ok_arr and ok_exp and ok_between and ok_catch and ok_time
    fmt = lambda a: "/".join(f"{v:.1e}" for v in a)
    record(
        8, ok,
        f"beta {beta:.3f} ok={ok_beta}; Arrhenius R2 {fit.nu0_r2:.3f} nu0 {fit.nu0:.3f} vs gamma {fit.gamma} ok={ok_arr}; "
        f"exp>none T<=900 ok={ok_exp}; gaussian between T<=600 ok={ok_between}; gaussian nears Bell ok={ok_catch}; "
        f"T {'/'.join(str(int(t)) for t in T)} none {fmt(nu['none'])} gauss {fmt(nu['gaussian'])} "
        f"exp {fmt(nu['exponential'])}; {elapsed:.0f} s (limit 1800 s)",
    )
    assert ok


@pytest.mark.slow
def test_criterion_9_thermal_limits(record):
    seeds = (0, 1, 2)
    s0 = np.median([thermal_run("exponential", 0.0, s)["sigma"] for s in seeds])
    ref0 = thermal_sigma(0.0)
    s_hot = np.median([thermal_run("exponential", 2000.0, s)["sigma"] for s in seeds])
    cl = KB * 2000.0 / 1.0
    e0 = abs(s0 - ref0) / ref0
    e_hot = abs(s_hot**2 - cl) / cl
    ok = e0 < 0.15 and e_hot < 0.10
    s0_kde = np.median([thermal_run("exponential", 0.0, s)["sigma_kde"] for s in seeds])
    record(9, ok, f"T=0 sigma {s0:.4f} vs {ref0:.4f} ({e0:.1%}, tol 15%; smoothed density {s0_kde:.4f}); "
                  f"T=2000 sigma^2 {s_hot**2:.4f} vs kT/k {cl:.4f} ({e_hot:.1%}, tol 10%)")
    assert ok


@pytest.mark.slow
def test_criterion_10_integrator(record):
    grid = GridSpec.default(1)
    pot = preset("harm1", 1)
    ref = GridField(grid, pot.ground_state_density(grid.nodes, m)).normalized()
    X = 1.2 * sample_uniform_fill(ref, 20)
    drift = {}
    for family, dt0 in (("gaussian", 0.01), ("exponential", 0.01), ("original1d", 1e-3)):
        b = bandwidth_amise(ref, 20, 1, family) if family != "original1d" else 1.0
        traj = run(WorldEnsemble(X, m), pot, KernelSpec(family, b, 1), IntegratorConfig(dt0=dt0, dt_max=0.05, steps=1000))
        E = np.array([r.E_tot for r in traj.energies])
        drift[family] = float(np.max(np.abs(E - E[0])) / abs(E[0]))
    equi = {}
    for label, kernel, dt in (("none", None, 0.5), ("exponential", KernelSpec("exponential", 0.1, 1), 0.1)):
        ens = WorldEnsemble(sample_uniform_fill(ref, 20), m)
        steps = int(50_000 / dt)
        cfg = IntegratorConfig(dt0=dt, dt_max=dt, gamma=1.0, T=300.0, steps=steps, seed=4,
                               thermostat="langevin", adaptive=False)
        KE = []
        run(ens, pot, kernel, cfg, stride=10,
            callback=lambda i, t, e, r: KE.append(r.KE) if i > steps // 50 else None)
        equi[label] = np.mean(KE) / 20 / (0.5 * KB * 300.0) - 1
    ok = max(drift.values()) < 1e-3 and all(abs(v) < 0.05 for v in equi.values())
    record(10, ok, "energy drift " + ", ".join(f"{k} {v:.1e}" for k, v in drift.items()) + " (tol 1e-3); "
                   "equipartition " + ", ".join(f"{k} {v:+.1%}" for k, v in equi.items()) + " (tol 5%)")
    assert ok
