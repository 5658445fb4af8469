"""Physical constants in the eV / Å / fs unit system."""

HBAR = 0.6582119569  # eV fs
KB = 8.617333262e-5  # eV / K
C_LIGHT = 2997.92458  # Å / fs
PROTON_REST_ENERGY = 938.272e6  # eV

# m = E / c^2 in eV fs^2 / Å^2
PROTON_MASS = PROTON_REST_ENERGY / C_LIGHT**2
