"""Print the tunneling rate table next to the Arrhenius and Bell curves.

    python3 scripts/summarize_tunnel.py results/tunnel
"""

import argparse
import json
import os

from miw.experiments import arrhenius_rate, bell_rate, read_rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("tunnel_dir")
    args = p.parse_args(argv)
    with open(os.path.join(args.tunnel_dir, "summary.json")) as fh:
        s = json.load(fh)
    rows = read_rows(os.path.join(args.tunnel_dir, "rates.csv"))
    kernels = sorted({r["kernel"] for r in rows})
    temps = sorted({float(r["T"]) for r in rows})
    nu = {(r["kernel"], float(r["T"])): float(r["nu"]) for r in rows}
    print(f"nu0 = {s['nu0']:.4g} 1/fs (R2 {s['nu0_r2']:.3f}), gamma = {s['gamma']}, beta = {s['beta']:.3f}")
    print("T[K]  " + "  ".join(f"{k:>11}" for k in kernels) + "  arrhenius     bell")
    for T in temps:
        cells = "  ".join(f"{nu[(k, T)]:11.3e}" for k in kernels)
        nc = float(arrhenius_rate(T, s["nu0"], s["dE"]))
        nq = float(bell_rate(T, s["nu0"], s["dE"], s["beta"]))
        print(f"{T:5.0f}  {cells}  {nc:9.3e}  {nq:9.3e}")


if __name__ == "__main__":
    main()
