"""Physical constants (CODATA 2018) and unit conversions.

Energies are carried in eV and times in seconds throughout the package.
SI values are derived from the eV ones through the elementary charge so that
every route through the code sees one consistent set of numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 6.582119569e-16  # eV s
    kB: float = 8.617333262e-5  # eV / K
    elementary_charge: float = 1.602176634e-19  # J / eV

    @property
    def hbar_si(self) -> float:
        """Reduced Planck constant in J s."""
        return self.hbar * self.elementary_charge

    @property
    def kB_si(self) -> float:
        """Boltzmann constant in J / K."""
        return self.kB * self.elementary_charge


CODATA = PhysicalConstants()

HBAR = CODATA.hbar
KB = CODATA.kB
HBAR_SI = CODATA.hbar_si
KB_SI = CODATA.kB_si


def time_from_energy(gamma: float) -> float:
    """Characteristic time hbar/gamma in seconds for a width in eV.

    A vanishing width maps to ``math.inf``.
    """
    if gamma == 0:
        return math.inf
    return HBAR / gamma


def energy_from_rate(rate: float) -> float:
    """Width in eV corresponding to a decay rate in 1/s."""
    return HBAR * rate
