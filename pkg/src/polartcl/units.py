"""Atomic-unit conversion helpers.

All internal math runs in Hartree atomic units with hbar = 1.  Frequencies,
energies and temperatures read from config files may carry a unit tag and are
converted on input; spectra are written with companion eV / cm^-1 columns.
"""

import numpy as np

HARTREE_EV = 27.211386
HARTREE_CM = 219474.63
KB_HARTREE = 3.166811e-6  # Boltzmann constant, Hartree / Kelvin
AU_FS = 0.02418884254     # one a.u. of time in femtoseconds

_TO_HARTREE = {
    "au": 1.0,
    "a.u.": 1.0,
    "hartree": 1.0,
    "ha": 1.0,
    "ev": 1.0 / HARTREE_EV,
    "cm-1": 1.0 / HARTREE_CM,
    "cm^-1": 1.0 / HARTREE_CM,
    "1/cm": 1.0 / HARTREE_CM,
    "k": KB_HARTREE,  # temperature -> thermal energy k_B T
    "kelvin": KB_HARTREE,
    "fs": 1.0 / AU_FS,  # time
}


class UnknownUnitError(ValueError):
    pass


def convert_units(value, tag):
    """Convert ``value`` with unit ``tag`` to atomic units (Hartree for
    energies, k_B T in Hartree for temperatures, a.u. for times)."""
    key = tag.strip().lower()
    if key not in _TO_HARTREE:
        raise UnknownUnitError(f"unknown unit tag {tag!r}")
    return value * _TO_HARTREE[key]


def beta_from_temperature(t_kelvin):
    """Inverse temperature 1/(k_B T) in inverse Hartree; T = 0 gives +inf."""
    if t_kelvin == 0:
        return np.inf
    return 1.0 / (KB_HARTREE * t_kelvin)


def parse_quantity(text):
    """Parse '0.0729', '1600 cm-1', '273 K', 'inf' into atomic units."""
    parts = str(text).split()
    if len(parts) == 1:
        return float(parts[0])
    if len(parts) == 2:
        return convert_units(float(parts[0]), parts[1])
    raise ValueError(f"cannot parse quantity {text!r}")
