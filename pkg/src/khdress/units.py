"""Atomic units and the conversions applied at the configuration boundary.

Everything inside the library is in Hartree atomic units (hbar = m_e = |e| = 1).
"""
from __future__ import annotations

import re

from scipy.constants import physical_constants as _pc

BOHR_NM = _pc["Bohr radius"][0] * 1e9
HARTREE_MEV = _pc["Hartree energy in eV"][0] * 1e3
AU_TIME_FS = _pc["atomic unit of time"][0] * 1e15

HBAR = 1.0
ELECTRON_MASS = 1.0

# factor converting one unit into atomic units, per dimension
_TABLE = {
    "length": {"au": 1.0, "bohr": 1.0, "nm": 1.0 / BOHR_NM, "angstrom": 0.1 / BOHR_NM, "A": 0.1 / BOHR_NM},
    "energy": {"au": 1.0, "hartree": 1.0, "Ha": 1.0, "meV": 1.0 / HARTREE_MEV, "eV": 1e3 / HARTREE_MEV},
    "time": {"au": 1.0, "fs": 1.0 / AU_TIME_FS},
    "mass": {"au": 1.0, "me": 1.0},
    "charge": {"au": 1.0, "e": 1.0},
    "angle": {"rad": 1.0, "deg": 3.141592653589793 / 180.0},
    "dimensionless": {"1": 1.0},
    "vector_potential": {"au": 1.0},
}

DIMENSIONS = tuple(_TABLE)

_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z/0-9]*)\s*$")


def to_au(value: float, unit: str, dimension: str) -> float:
    """Convert ``value`` given in ``unit`` to atomic units.

    ``frequency`` is accepted as a pseudo-dimension: energies are read as photon
    energies (omega = E / hbar) and ``1/fs`` as an angular frequency.
    """
    if dimension == "frequency":
        if unit in ("au", "1/au"):
            return float(value)
        if unit == "1/fs":
            return float(value) * AU_TIME_FS
        return to_au(value, unit, "energy")
    try:
        return float(value) * _TABLE[dimension][unit]
    except KeyError:
        raise ValueError(f"unit {unit!r} is not a {dimension} unit") from None


def from_au(value, unit: str, dimension: str):
    if dimension == "frequency":
        if unit in ("au", "1/au"):
            return value
        if unit == "1/fs":
            return value / AU_TIME_FS
        return from_au(value, unit, "energy")
    return value / _TABLE[dimension][unit]


def parse_quantity(raw, dimension: str, default_unit: str = "au") -> float:
    """Read a number or a ``"<value> <unit>"`` string into atomic units."""
    if isinstance(raw, bool):
        raise ValueError("boolean is not a quantity")
    if isinstance(raw, (int, float)):
        unit = default_unit
        if dimension in ("angle", "dimensionless") and unit == "au":
            unit = "rad" if dimension == "angle" else "1"
        return to_au(raw, unit, dimension)
    m = _QUANTITY.match(str(raw))
    if not m:
        raise ValueError(f"cannot parse quantity {raw!r}")
    number, unit = m.groups()
    if not unit:
        return parse_quantity(float(number), dimension, default_unit)
    return to_au(float(number), unit, dimension)
