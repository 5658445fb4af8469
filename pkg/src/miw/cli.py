"""Command-line driver for the experiments.

    miw energy-scan --preset harm1 --D 1 --N 10 50 100 --n-seeds 10
    miw relax --preset lj1 --D 2 --kernels exponential --methods bfgs
    miw thermal --temperatures 0 300 2000
    miw tunnel --n-seeds 5 --threads 4
    miw numerov --preset lj1 --D 2
    miw selftest

A JSON config (``--config``) supplies ``RunConfig`` fields; explicit flags
override it. Results go to ``--out``, else ``$MIW_OUT_ROOT``, else
``./results``, in a subdirectory named after the experiment. Failures print a
JSON object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from miw.errors import DivergenceError, MiwError
from miw.experiments import (
    RunConfig,
    energy_scan,
    numerov_solve,
    relax_experiment,
    relax_rows,
    thermal_experiment,
    tunnel_experiment,
    write_rows,
)

log = logging.getLogger("miw")

SUBCOMMANDS = {
    "energy-scan": "energy_scan",
    "relax": "relax",
    "thermal": "thermal",
    "tunnel": "tunnel",
    "numerov": "numerov",
}

DEFAULTS = {
    "energy_scan": dict(kernels=["gaussian", "exponential", "original1d"], N=[2, 5, 10, 20, 50, 100, 150, 200]),
    "relax": dict(N=[50]),
    "thermal": dict(preset="harm1", kernels=["exponential", "gaussian"], N=[30]),
    "tunnel": dict(preset="dwell", kernels=["none", "gaussian", "exponential"], N=[50]),
    "numerov": dict(),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--out", help="output root directory")
    common.add_argument("--seed", type=int, default=None, help="base seed")
    common.add_argument("--n-seeds", type=int, default=None, help="number of seeds from --seed upwards")
    common.add_argument("--threads", type=int, default=1, help="worker processes for independent jobs")
    common.add_argument("--deterministic", action="store_true", help="force sequential execution")
    common.add_argument("--preset")
    common.add_argument("--D", type=int)
    common.add_argument("--kernels", nargs="+")
    common.add_argument("--N", type=int, nargs="+")
    common.add_argument("--methods", nargs="+")
    common.add_argument("--temperatures", type=float, nargs="+")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="miw", description="Many-interacting-worlds experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    sub.add_parser("selftest", parents=[common], help="quick consistency checks")
    return parser


def resolve_config(args, experiment):
    data = dict(DEFAULTS.get(experiment, {}))
    if args.config:
        with open(args.config) as fh:
            data.update(json.load(fh))
    data["experiment"] = experiment
    for key in ("preset", "D", "kernels", "N", "methods", "temperatures", "out"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.seed is not None or args.n_seeds is not None:
        base = args.seed if args.seed is not None else 0
        data["seeds"] = [base + i for i in range(args.n_seeds or 1)]
    return RunConfig.from_dict(data)


def _write_config(config, outdir):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.json"), "w") as fh:
        json.dump({**config.to_dict(), "digest": config.digest()}, fh, indent=2, sort_keys=True)


def cmd_energy_scan(config, outdir, threads):
    rows = energy_scan(config)
    path = os.path.join(outdir, f"energy_{config.preset}_{config.D}d.csv")
    write_rows(path, rows, config)
    return [path]


def cmd_relax(config, outdir, threads):
    results = relax_experiment(config, threads=threads)
    tag = f"{config.preset}_{config.D}d"
    paths = [os.path.join(outdir, f"relax_{tag}.csv")]
    write_rows(paths[0], relax_rows(results), config)
    for res in results:
        stem = f"{tag}_{res['kernel']}_{res['method']}_N{res['N']}_s{res['seed']}"
        final = os.path.join(outdir, f"final_{stem}.miwt")
        res["report"].final_ensemble_to_binary(final)
        paths.append(final)
        if res["report"].md_energies:
            md = [dict(step=i, E_tot=e) for i, e in enumerate(res["report"].md_energies, 1)]
            p = os.path.join(outdir, f"md_energy_{stem}.csv")
            write_rows(p, md, config)
            paths.append(p)
    return paths


def cmd_thermal(config, outdir, threads):
    rows = thermal_experiment(config, threads=threads)
    path = os.path.join(outdir, "thermal.csv")
    write_rows(path, rows, config)
    return [path]


def cmd_tunnel(config, outdir, threads):
    traces = []
    fit = tunnel_experiment(config, traces_out=traces, threads=threads)
    paths = [os.path.join(outdir, n) for n in ("rates.csv", "seeds.csv", "models.csv", "traces.csv")]
    write_rows(paths[0], fit.rows, config)
    write_rows(paths[1], fit.seed_rows, config)
    temps = sorted({r["T"] for r in fit.rows})
    write_rows(paths[2], fit.model_rows(np.linspace(min(temps), max(temps), 50)), config)
    trace_rows = [
        dict(kernel=tr.kernel, T=tr.T, seed=tr.seed, t=t, f_count=fc, f_kde=fk)
        for tr in traces
        for t, fc, fk in zip(tr.times, tr.f_count, tr.f_kde)
    ]
    write_rows(paths[3], trace_rows, config)
    summary = dict(nu0=fit.nu0, nu0_r2=fit.nu0_r2, dE_free=fit.dE_free, beta=fit.beta,
                   gamma=fit.gamma, dE=fit.dE, config=config.digest())
    p = os.path.join(outdir, "summary.json")
    with open(p, "w") as fh:
        json.dump(summary, fh, indent=2)
    return paths + [p]


def cmd_numerov(config, outdir, threads):
    res, row = numerov_solve(config)
    stem = f"{config.preset}_{config.D}d"
    paths = [os.path.join(outdir, f"numerov_{stem}.csv"), os.path.join(outdir, f"density_{stem}.csv")]
    write_rows(paths[0], [row], config)
    res.density.to_csv(paths[1])
    return paths


def selftest():
    """Fast checks of forces, normalization and the eigensolver; returns failures."""
    from miw.constants import PROTON_MASS
    from miw.density import WorldEnsemble
    from miw.forces import interworld
    from miw.grid import GridSpec
    from miw.kernels import KernelSpec, normalization_constant, profile, radial_integral
    from miw.numerov import ground_state
    from miw.potentials import preset

    failures = []
    rng = np.random.default_rng(0)
    for fam in ("gaussian", "exponential"):
        for D in (1, 2, 3):
            X = rng.normal(scale=0.3, size=(6, D))
            k = KernelSpec(fam, 0.25, D)
            F = interworld(WorldEnsemble(X, PROTON_MASS), k).F
            h = 1e-6
            fd = np.zeros_like(X)
            for idx in np.ndindex(X.shape):
                xp, xm = X.copy(), X.copy()
                xp[idx] += h
                xm[idx] -= h
                up = interworld(WorldEnsemble(xp, PROTON_MASS), k).U
                um = interworld(WorldEnsemble(xm, PROTON_MASS), k).U
                fd[idx] = -(up - um) / (2 * h)
            err = np.max(np.abs(F - fd)) / np.max(np.abs(fd))
            ok = err < 1e-5
            print(f"forces {fam} D={D}: rel err {err:.2e} {'ok' if ok else 'FAIL'}")
            if not ok:
                failures.append(f"forces {fam} {D}")
            mass = normalization_constant(fam, D, 0.3) * radial_integral(lambda r: profile(fam, r / 0.3), D)
            ok = abs(mass - 1) < 1e-8
            print(f"kernel mass {fam} D={D}: {mass:.10f} {'ok' if ok else 'FAIL'}")
            if not ok:
                failures.append(f"mass {fam} {D}")
    pot = preset("harm1", 1)
    res = ground_state(GridSpec.default(1), pot, PROTON_MASS)
    rel = abs(res.E0 - pot.ground_state_energy(PROTON_MASS)) / pot.ground_state_energy(PROTON_MASS)
    ok = rel < 1e-3
    print(f"numerov harm1 1D: rel err {rel:.2e} {'ok' if ok else 'FAIL'}")
    if not ok:
        failures.append("numerov")
    return failures


COMMANDS = {
    "energy_scan": cmd_energy_scan,
    "relax": cmd_relax,
    "thermal": cmd_thermal,
    "tunnel": cmd_tunnel,
    "numerov": cmd_numerov,
}


def _fail(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, DivergenceError):
        payload["diagnostics"] = exc.diagnostics
    print(json.dumps(payload, default=str), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.command == "selftest":
            failures = selftest()
            if failures:
                raise MiwError(f"selftest failures: {failures}")
            return 0
        experiment = SUBCOMMANDS[args.command]
        config = resolve_config(args, experiment)
        threads = 1 if args.deterministic else max(1, args.threads)
        outdir = config.output_dir()
        _write_config(config, outdir)
        t0 = time.perf_counter()
        paths = COMMANDS[experiment](config, outdir, threads)
        log.info("%s done in %.1f s", args.command, time.perf_counter() - t0)
        for p in paths:
            log.info("wrote %s", p)
        return 0
    except MiwError as exc:
        return _fail(exc, 2)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
