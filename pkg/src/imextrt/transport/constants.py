"""Physical constants in the cm-s-erg-eV system (temperatures in eV)."""

from dataclasses import dataclass

import numpy as np

C_LIGHT = 2.99792458e10  # cm/s
H_PLANCK = 4.135667696e-15  # eV s
ERG_PER_EV = 1.602176634e-12

# a = 8 pi^5 k^4 / (15 h^3 c^3), with k folded into T [eV]
A_RAD = 8.0 * np.pi**5 * ERG_PER_EV / (15.0 * (H_PLANCK * C_LIGHT) ** 3)


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = C_LIGHT
    h: float = H_PLANCK
    a_rad: float = A_RAD
    erg_per_ev: float = ERG_PER_EV


CONSTANTS = PhysicalConstants()
