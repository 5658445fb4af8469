import json
import os
import subprocess
import sys

import numpy as np
import pytest

from miw.cli import build_parser, main, resolve_config
from miw.dynamics import read_binary
from miw.experiments import read_rows


def run_cli(*args, env=None):
    return subprocess.run(
        [sys.executable, "-m", "miw", *args], capture_output=True, text=True, env={**os.environ, **(env or {})}
    )


def first_line(path):
    with open(path) as fh:
        return fh.readline().strip()


def test_selftest_passes():
    proc = run_cli("selftest")
    assert proc.returncode == 0, proc.stderr
    assert "FAIL" not in proc.stdout


def test_unknown_preset_gives_json_error(tmp_path):
    proc = run_cli("relax", "--preset", "nope", "--out", str(tmp_path))
    assert proc.returncode == 2
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert err["error"] == "MiwError"
    assert "nope" in err["message"]


def test_missing_config_file_gives_json_error(tmp_path):
    proc = run_cli("numerov", "--config", str(tmp_path / "missing.json"))
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "FileNotFoundError"


def test_unknown_config_field_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "harm1", "bogus": 1}))
    assert main(["numerov", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "harm10", "D": 2, "N": [7]}))
    args = build_parser().parse_args(["relax", "--config", str(cfg), "--D", "1", "--seed", "5", "--n-seeds", "3"])
    conf = resolve_config(args, "relax")
    assert conf.preset == "harm10"
    assert conf.D == 1
    assert conf.N == [7]
    assert conf.seeds == [5, 6, 7]


def test_numerov_outputs(tmp_path):
    assert main(["numerov", "--preset", "harm1", "--D", "1", "--out", str(tmp_path)]) == 0
    outdir = tmp_path / "numerov"
    stored = json.loads((outdir / "config.json").read_text())
    row = read_rows(outdir / "numerov_harm1_1d.csv")[0]
    assert first_line(outdir / "numerov_harm1_1d.csv") == f"# config={stored['digest']}"
    assert abs(float(row["rel_err"])) < 1e-3


def test_energy_scan_outputs(tmp_path):
    assert main(["energy-scan", "--N", "2", "10", "--n-seeds", "2", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "energy_scan" / "energy_harm1_1d.csv")
    assert {r["kernel"] for r in rows} == {"gaussian", "exponential", "original1d"}
    assert len(rows) == 3 * 2 * 3  # kernels x N x (uniform + 2 MC seeds)


def test_relax_outputs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"protocol": {"sequences": 2, "steps_per_seq": 20, "max_iter_per_seq": 5}}))
    argv = ["relax", "--config", str(cfg), "--kernels", "exponential", "--N", "10", "--out", str(tmp_path)]
    assert main(argv) == 0
    outdir = tmp_path / "relax"
    rows = read_rows(outdir / "relax_harm1_1d.csv")
    assert {r["method"] for r in rows} == {"bfgs", "damped_md"}
    md = read_rows(outdir / "md_energy_harm1_1d_exponential_damped_md_N10_s0.csv")
    assert len(md) == 2 * 20
    times, snaps, stride = read_binary(outdir / "final_harm1_1d_exponential_bfgs_N10_s0.miwt")
    assert snaps[0].shape == (10, 1)


def test_out_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MIW_OUT_ROOT", str(tmp_path))
    assert main(["numerov", "--preset", "dwell"]) == 0
    assert (tmp_path / "numerov" / "numerov_dwell_1d.csv").exists()


def test_thermal_outputs(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"integrator": {"t_equil": 20.0, "t_sample": 50.0}}))
    argv = ["thermal", "--config", str(cfg), "--temperatures", "0", "300", "--out", str(tmp_path)]
    assert main(argv) == 0
    rows = read_rows(tmp_path / "thermal" / "thermal.csv")
    assert len(rows) == 2 * 2
    assert all(np.isfinite(float(r["sigma"])) for r in rows)


def test_tunnel_outputs(tmp_path):
    cfg = tmp_path / "c.json"
    opts = {"chunk": 100.0, "t_min": 100.0, "t_max_kernel": 200.0, "t_max_none": 200.0}
    cfg.write_text(json.dumps({"integrator": opts}))
    argv = ["tunnel", "--config", str(cfg), "--temperatures", "900", "1500", "--kernels", "none", "exponential",
            "--out", str(tmp_path)]
    assert main(argv) == 0
    outdir = tmp_path / "tunnel"
    for name in ("rates.csv", "seeds.csv", "models.csv", "traces.csv"):
        assert first_line(outdir / name).startswith("# config=")
    summary = json.loads((outdir / "summary.json").read_text())
    assert summary["beta"] == pytest.approx(1.77, abs=0.05)
    traces = read_rows(outdir / "traces.csv")
    assert {"f_count", "f_kde"} <= set(traces[0])


def test_deterministic_flag_matches_threads(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"integrator": {"t_equil": 10.0, "t_sample": 20.0}}))
    base = ["thermal", "--config", str(cfg), "--temperatures", "300", "--n-seeds", "2"]
    assert main(base + ["--deterministic", "--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--threads", "2", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "thermal" / "thermal.csv").read_text()
    b = (tmp_path / "b" / "thermal" / "thermal.csv").read_text()
    assert a == b
