"""Kernel-density Many Interacting Worlds simulations.

Units are eV, Å and fs throughout.
"""

from miw.constants import HBAR, KB, PROTON_MASS
from miw.grid import GridSpec, GridField
from miw.kernels import KernelSpec
from miw.potentials import PotentialSpec, Harmonic, LennardJonesAngular, DoubleWell
from miw.density import WorldEnsemble

__all__ = [
    "HBAR",
    "KB",
    "PROTON_MASS",
    "GridSpec",
    "GridField",
    "KernelSpec",
    "PotentialSpec",
    "Harmonic",
    "LennardJonesAngular",
    "DoubleWell",
    "WorldEnsemble",
]
