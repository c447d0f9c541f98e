"""Quantity strings with mandatory units for deck and design files.

A dimensional field is written as ``"<number> <unit>"`` (``"23.98 nA"``,
``"102 ppm/K"``). The unit must belong to the field's dimension; anything
else is a load error rather than a silent conversion.
"""
import re

from .errors import SchemaError

_C0 = 273.15

# unit -> (dimension, scale to SI); temperatures handled separately
UNITS = {
    "A": ("current", 1.0), "mA": ("current", 1e-3), "uA": ("current", 1e-6),
    "µA": ("current", 1e-6), "nA": ("current", 1e-9), "pA": ("current", 1e-12),
    "V": ("voltage", 1.0), "mV": ("voltage", 1e-3), "uV": ("voltage", 1e-6),
    "um": ("length", 1.0), "µm": ("length", 1.0), "nm": ("length", 1e-3),
    "V/K": ("tempco_v", 1.0), "mV/K": ("tempco_v", 1e-3), "mV/degC": ("tempco_v", 1e-3),
    "V/degC": ("tempco_v", 1.0),
    "V*um": ("pelgrom", 1.0), "mV*um": ("pelgrom", 1e-3),
    "V/um": ("early", 1.0),
    "ohm/sq": ("sheet", 1.0), "kohm/sq": ("sheet", 1e3),
    "1/K": ("tcr1", 1.0), "ppm/K": ("tcr1", 1e-6), "ppm/degC": ("tcr1", 1e-6),
    "1/K^2": ("tcr2", 1.0), "ppm/K^2": ("tcr2", 1e-6),
    "ohm": ("resistance", 1.0), "kohm": ("resistance", 1e3), "Mohm": ("resistance", 1e6),
    "W": ("power", 1.0),
}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S+)\s*$")


def parse_quantity(value, dimension, where=None):
    """Return ``value`` converted to SI (temperatures to kelvin)."""
    if isinstance(value, bool) or not isinstance(value, str):
        raise SchemaError(f"expected a quantity with a {dimension} unit, got {value!r}", where)
    m = _QTY.match(value)
    if not m:
        raise SchemaError(f"cannot parse quantity {value!r}", where)
    number, unit = float(m.group(1)), m.group(2)
    if dimension == "temperature":
        if unit == "K":
            return number
        if unit in ("degC", "°C", "C"):
            return number + _C0
        raise SchemaError(f"unit {unit!r} is not a temperature unit", where)
    if unit not in UNITS:
        raise SchemaError(f"unknown unit {unit!r}", where)
    dim, scale = UNITS[unit]
    if dim != dimension:
        raise SchemaError(f"unit {unit!r} has dimension {dim}, expected {dimension}", where)
    return number * scale


def format_quantity(value, unit):
    """Inverse of :func:`parse_quantity` for a chosen unit, exact for SI units."""
    if unit == "K":
        return f"{value!r} K"
    return f"{value / UNITS[unit][1]!r} {unit}"


def celsius_to_kelvin(t_c):
    return t_c + _C0


def kelvin_to_celsius(t_k):
    return t_k - _C0
