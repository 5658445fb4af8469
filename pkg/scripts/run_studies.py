"""Run every study through the CLI at the standard protocol settings.

    python3 scripts/run_studies.py --out results --threads 4
    python3 scripts/run_studies.py --only relax tunnel

Each study writes into its own subdirectory of ``--out``; see the README for
the files produced.
"""

import argparse
import sys

from miw.cli import main as miw

PRESETS = ("harm1", "harm10", "lj1")


def studies(n_seeds):
    seeds = ["--n-seeds", str(n_seeds)]
    for preset in PRESETS:
        for D in (1, 2, 3):
            yield "numerov", ["numerov", "--preset", preset, "--D", str(D)]
            yield "energy-scan", ["energy-scan", "--preset", preset, "--D", str(D), "--n-seeds", "10"]
            yield "relax", ["relax", "--preset", preset, "--D", str(D), "--kernels", "gaussian", "exponential",
                            *seeds]
    yield "thermal", ["thermal", "--temperatures", "0", "100", "300", "600", "1000", "1500", "2000", *seeds]
    yield "tunnel", ["tunnel", *seeds]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--only", nargs="+", help="subset of: numerov energy-scan relax thermal tunnel")
    args = p.parse_args(argv)
    failed = []
    for name, cmd in studies(args.n_seeds):
        if args.only and name not in args.only:
            continue
        print("miw", " ".join(cmd), flush=True)
        if miw(cmd + ["--out", args.out, "--threads", str(args.threads)]) != 0:
            failed.append(" ".join(cmd))
    for cmd in failed:
        print("failed:", cmd, file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
