"""Time integration of world ensembles.

Velocity Verlet with an optional Langevin thermostat in BAOAB splitting:
half kick, half drift, exact Ornstein-Uhlenbeck velocity update, half drift,
half kick. With the thermostat off this is plain velocity Verlet. Every world
and every degree of freedom receives independent noise.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from miw.constants import KB
from miw.errors import MiwError, NonFiniteForceError
from miw.forces import ForceModel

TRAJ_MAGIC = b"MIWT"
TRAJ_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass
class IntegratorConfig:
    dt0: float = 0.01  # fs
    dt_max: float = 0.05  # fs
    gamma: float = 0.0  # 1/fs
    T: float = 0.0  # K
    steps: int = 1000
    seed: int = 0
    thermostat: str = "off"
    adaptive: bool = True

    def __post_init__(self):
        if not 0 < self.dt0 <= self.dt_max:
            raise MiwError("need 0 < dt0 <= dt_max")
        if self.gamma < 0 or self.T < 0:
            raise MiwError("gamma and T must be non-negative")
        if self.steps < 0:
            raise MiwError("steps must be non-negative")
        if self.thermostat not in ("off", "langevin"):
            raise MiwError(f"unknown thermostat {self.thermostat!r}")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    sample_stride: int = 1
    dts: list = field(default_factory=list)
    n_force_evals: int = 0

    def positions(self):
        """Snapshots stacked to shape ``(samples, N, K)``."""
        return np.stack(self.snapshots)

    def to_csv(self, path):
        N, K = self.snapshots[0].shape
        cols = ["time"] + [f"x{n}_{k}" for n in range(N) for k in range(K)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for t, X in zip(self.times, self.snapshots):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in X.ravel()])

    def to_binary(self, path):
        write_binary(path, self.times, self.snapshots, self.sample_stride)


def write_binary(path, times, snapshots, stride=1):
    """Little-endian stream: header then ``(time, N*K positions)`` per frame."""
    N, K = np.asarray(snapshots[0]).shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TRAJ_MAGIC, TRAJ_VERSION, N, K, stride))
        for t, X in zip(times, snapshots):
            frame = np.concatenate([[t], np.asarray(X, dtype="<f8").ravel()])
            fh.write(frame.astype("<f8").tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        magic, version, N, K, stride = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != TRAJ_MAGIC:
            raise MiwError("not a MIW trajectory file")
        if version != TRAJ_VERSION:
            raise MiwError(f"unsupported trajectory version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    frames = data.reshape(-1, 1 + N * K)
    return frames[:, 0].copy(), frames[:, 1:].reshape(-1, N, K).copy(), stride


def adaptive_dt(F_now, F_ref, config):
    """``min(dt0 * max|F_ref| / max|F_now|, dt_max)``."""
    f_now = float(np.max(np.abs(F_now)))
    if f_now == 0.0:
        return config.dt_max
    return min(config.dt0 * float(np.max(np.abs(F_ref))) / f_now, config.dt_max)


def step(ensemble, forces_fn, config, F_prev, dt, rng=None):
    """Advance the ensemble in place by one step of size ``dt``.

    Returns ``(F_new, report)`` at the new positions. ``forces_fn`` maps an
    ensemble to ``(F, EnergyReport)``.
    """
    m = ensemble.m
    X, V = ensemble.X, ensemble.V
    V += 0.5 * dt * F_prev / m
    X += 0.5 * dt * V
    if config.thermostat == "langevin" and config.gamma > 0:
        c1 = math.exp(-config.gamma * dt)
        c2 = math.sqrt((1 - c1 * c1) * KB * config.T / m)
        V *= c1
        if c2 > 0:
            V += c2 * rng.standard_normal(V.shape)
    X += 0.5 * dt * V
    F_new, report = forces_fn(ensemble)
    if not np.all(np.isfinite(F_new)):
        raise NonFiniteForceError("non-finite forces, aborting step")
    V += 0.5 * dt * F_new / m
    report.KE = float(0.5 * m * np.sum(V * V))
    return F_new, report


def run(ensemble, potential, kernel, config, stride=1, mode="taylor2", forces_fn=None, callback=None, rng=None):
    """Integrate ``config.steps`` steps, recording every ``stride``-th state.

    The initial state is always recorded, so a run yields
    ``1 + steps // stride`` snapshots. The ensemble is advanced in place.
    The reference force for the adaptive step is the force at the start of
    this run. Pass ``rng`` to continue a noise stream across several runs;
    otherwise one is seeded from ``config.seed``.
    """
    if stride < 1:
        raise MiwError("stride must be at least 1")
    forces_fn = forces_fn or ForceModel(potential, kernel, mode)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    F, report = forces_fn(ensemble)
    if not np.all(np.isfinite(F)):
        raise NonFiniteForceError("non-finite initial forces")
    report.KE = float(0.5 * ensemble.m * np.sum(ensemble.V**2))
    F_ref = F.copy()
    traj = Trajectory(sample_stride=stride)
    t = 0.0
    traj.times.append(t)
    traj.snapshots.append(ensemble.X.copy())
    traj.energies.append(report)
    for i in range(1, config.steps + 1):
        dt = adaptive_dt(F, F_ref, config) if config.adaptive else config.dt0
        F, report = step(ensemble, forces_fn, config, F, dt, rng)
        t += dt
        traj.dts.append(dt)
        if i % stride == 0:
            traj.times.append(t)
            traj.snapshots.append(ensemble.X.copy())
            traj.energies.append(report)
        if callback is not None:
            callback(i, t, ensemble, report)
    traj.n_force_evals = config.steps + 1
    return traj
