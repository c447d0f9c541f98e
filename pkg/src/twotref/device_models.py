"""Compact MOSFET and resistor models with explicit temperature laws.

Voltages passed to transistor functions are magnitudes in the device's own
orientation: an n-channel device takes ``v_gs``/``v_ds``, a p-channel device
takes ``v_sg``/``v_sd``. Temperatures are always in kelvin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from scipy import constants
from scipy.special import wrightomega

from .errors import DomainError, NumericError

K_OVER_Q = constants.k / constants.e  # V/K
T_REF_DEFAULT = 298.15


@dataclass(frozen=True)
class TransistorParams:
    """Per-flavour compact-model parameters.

    ``i_sq_ref`` is the specific sheet current at ``t_ref`` in the ACM sense;
    the weak-inversion law reuses the same calibration. ``v_t0_ref`` and
    ``alpha_vt0`` are magnitudes. ``a_vt`` is the Pelgrom coefficient in V*um
    and may be ``None`` when the deck does not publish it.
    """

    name: str
    polarity: str  # "n" or "p"
    n: float
    i_sq_ref: float
    v_t0_ref: float
    alpha_vt0: float = 0.0
    m_mob: float = 1.5
    a_vt: Optional[float] = None
    v_ea_per_um: float = math.inf
    t_ref: float = T_REF_DEFAULT

    def __post_init__(self):
        if self.polarity not in ("n", "p"):
            raise DomainError(f"{self.name}: polarity must be 'n' or 'p', got {self.polarity!r}")
        checks = [
            ("n", self.n > 1.0, "n > 1"),
            ("i_sq_ref", self.i_sq_ref > 0.0, "i_sq_ref > 0"),
            ("v_t0_ref", self.v_t0_ref >= 0.0, "v_t0_ref >= 0"),
            ("m_mob", 1.0 <= self.m_mob <= 2.5, "1.0 <= m_mob <= 2.5"),
            ("v_ea_per_um", self.v_ea_per_um > 0.0, "v_ea_per_um > 0"),
            ("t_ref", self.t_ref > 0.0, "t_ref > 0"),
        ]
        if self.a_vt is not None:
            checks.append(("a_vt", self.a_vt >= 0.0, "a_vt >= 0"))
        for fname, ok, rule in checks:
            if not ok:
                raise DomainError(f"{self.name}.{fname}: violates {rule} (got {getattr(self, fname)!r})")


@dataclass(frozen=True)
class ResistorParams:
    name: str
    sheet_resistance: float  # ohm/sq at t_ref
    tcr1: float = 0.0  # 1/K
    tcr2: float = 0.0  # 1/K^2
    t_ref: float = T_REF_DEFAULT
    label: str = ""

    def __post_init__(self):
        if not self.sheet_resistance > 0.0:
            raise DomainError(f"{self.name}.sheet_resistance: violates sheet_resistance > 0")


@dataclass(frozen=True)
class Geometry:
    """One (possibly composite) device: ``mult`` parallel fingers of
    ``series`` segments, each ``w`` x ``l`` um."""

    w: float
    l: float
    mult: int = 1
    series: int = 1

    def __post_init__(self):
        if not (self.w > 0.0 and self.l > 0.0):
            raise DomainError(f"geometry needs w, l > 0 (got w={self.w!r}, l={self.l!r})")
        if self.mult < 1 or self.series < 1:
            raise DomainError("geometry needs mult >= 1 and series >= 1")

    @property
    def aspect(self) -> float:
        return self.mult * self.w / (self.series * self.l)

    @property
    def l_eff(self) -> float:
        return self.series * self.l

    @property
    def area(self) -> float:
        return self.mult * self.series * self.w * self.l


@dataclass(frozen=True)
class OperatingPoint:
    v_g: float
    v_s: float
    v_d: float
    i_f: float
    i_r: float
    i_d: float
    g_m: float = 0.0
    g_d: float = 0.0
    g_mb: float = 0.0
    saturated: bool = field(default=False)


def _check_t(t):
    if not t > 0.0:
        raise DomainError(f"temperature must be positive kelvin, got {t!r}")


def thermal_voltage(t: float) -> float:
    _check_t(t)
    return K_OVER_Q * t


def specific_sheet_current(p: TransistorParams, t: float) -> float:
    _check_t(t)
    return p.i_sq_ref * (t / p.t_ref) ** (2.0 - p.m_mob)


def threshold_voltage(p: TransistorParams, t: float) -> float:
    _check_t(t)
    return p.v_t0_ref - p.alpha_vt0 * (t - p.t_ref)


def ids_weak_inversion(p: TransistorParams, g: Geometry, v_gs: float, v_ds: float,
                       v_bs: float = 0.0, t: float = T_REF_DEFAULT) -> float:
    """Subthreshold drain current with Early and triode factors.

    Reduces to ``I_SQ*S*exp((v_gs - V_T0)/(n*U_T))`` for ``v_ds >> 4 U_T`` and
    an infinite Early voltage.
    """
    if v_bs != 0.0:
        raise DomainError("weak-inversion law is defined at zero body-to-source voltage")
    ut = thermal_voltage(t)
    v_ds = abs(v_ds)
    i0 = specific_sheet_current(p, t) * g.aspect * math.exp(
        (v_gs - threshold_voltage(p, t)) / (p.n * ut))
    early = 1.0 + v_ds / (p.v_ea_per_um * g.l_eff)
    triode = -math.expm1(-v_ds / ut)
    return i0 * early * triode


def acm_drain_current(p: TransistorParams, g: Geometry, i_f: float, i_r: float = 0.0,
                      t: float = T_REF_DEFAULT) -> float:
    if i_r < 0.0 or i_r > i_f:
        raise DomainError(f"need i_f >= i_r >= 0 (got i_f={i_f!r}, i_r={i_r!r})")
    return specific_sheet_current(p, t) * g.aspect * (i_f - i_r)


def _sqrt1p_minus_1(i):
    # sqrt(1 + i) - 1 without cancellation for small i
    return i / (math.sqrt(1.0 + i) + 1.0)


def overdrive_from_inversion_level(i_f: float, t: float) -> float:
    """Forward ACM relation: ``V_P - V_S`` for a given inversion level."""
    if not i_f > 0.0:
        raise DomainError(f"inversion level must be positive, got {i_f!r}")
    u = _sqrt1p_minus_1(i_f)
    return thermal_voltage(t) * (u - 1.0 + math.log(u))


def inversion_level_from_overdrive(v_p_minus_v_s: float, t: float) -> float:
    """Inverse of :func:`overdrive_from_inversion_level`.

    With ``u = sqrt(1 + i_f) - 1`` the relation reads ``u + ln u = x + 1``
    (``x`` the overdrive in units of U_T), whose solution is the Wright omega
    function. A final Newton correction on ``u`` cleans up the last ulps.
    """
    x = v_p_minus_v_s / thermal_voltage(t)
    z = x + 1.0
    u = float(wrightomega(z).real)
    if not (math.isfinite(u) and u >= 0.0):
        raise NumericError(f"inversion level not representable for overdrive {v_p_minus_v_s!r} V")
    if u > 0.0:
        u -= (u + math.log(u) - z) / (1.0 + 1.0 / u)
    return u * (u + 2.0)


def small_signal(p: TransistorParams, g: Geometry, op: OperatingPoint, t: float):
    """``(g_m, g_d, g_mb)`` at a solved bias.

    ``g_m`` follows the ACM expression, which tends to ``I_D/(n U_T)`` as the
    forward inversion level vanishes. ``g_d`` is an Early-voltage-per-length
    law and ``g_mb = (n - 1) g_m``.
    """
    ut = thermal_voltage(t)
    i_d = abs(op.i_d)
    g_m = 2.0 * i_d / (p.n * ut * (math.sqrt(1.0 + op.i_f) + 1.0))
    g_d = i_d / (p.v_ea_per_um * g.l_eff)
    return g_m, g_d, (p.n - 1.0) * g_m


def operating_point(p: TransistorParams, g: Geometry, v_g: float, v_s: float, v_d: float,
                    t: float) -> OperatingPoint:
    """ACM operating point with the body tied to the reference node (0 V)."""
    ut = thermal_voltage(t)
    v_p = (v_g - threshold_voltage(p, t)) / p.n
    i_f = inversion_level_from_overdrive(v_p - v_s, t)
    i_r = inversion_level_from_overdrive(v_p - v_d, t)
    if i_r > i_f:
        i_f, i_r = i_r, i_f
    i_d = acm_drain_current(p, g, i_f, i_r, t)
    op = OperatingPoint(v_g, v_s, v_d, i_f, i_r, i_d, saturated=abs(v_d - v_s) > 4.0 * ut)
    g_m, g_d, g_mb = small_signal(p, g, op, t)
    return OperatingPoint(v_g, v_s, v_d, i_f, i_r, i_d, g_m, g_d, g_mb, op.saturated)


def gate_voltage_for_current(p: TransistorParams, g: Geometry, i_d: float, t: float) -> float:
    """Source-referenced gate drive magnitude that carries ``i_d`` in saturation.

    Inverts the ACM current and pinch-off relations with the source on the
    body: ``V_GS = V_T0 + n (V_P - V_S)``.
    """
    if not i_d > 0.0:
        raise DomainError(f"branch current must be positive, got {i_d!r}")
    i_f = i_d / (specific_sheet_current(p, t) * g.aspect)
    return threshold_voltage(p, t) + p.n * overdrive_from_inversion_level(i_f, t)


def resistance(r: ResistorParams, squares: float, t: float) -> float:
    if not squares > 0.0:
        raise DomainError(f"resistor needs a positive number of squares, got {squares!r}")
    _check_t(t)
    dt = t - r.t_ref
    return r.sheet_resistance * squares * (1.0 + r.tcr1 * dt + r.tcr2 * dt * dt)


def resistance_slope(r: ResistorParams, squares: float, t: float) -> float:
    """dR/dT in ohm/K."""
    _check_t(t)
    return r.sheet_resistance * squares * (r.tcr1 + 2.0 * r.tcr2 * (t - r.t_ref))
