"""DC behavioural models of the 2T voltage reference and the two current
references built on it.

Equations are written in magnitudes so that the inverted (pMOS) topologies
share code with the nMOS ones. ``M1`` is the gate-driven transistor whose
V_GS equals ``V_REF``; ``M2`` is the zero-V_GS current source on top of it.
The PTAT reference loads ``V_REF`` with a self-cascode pair ``M6``/``M7``
mirrored by ``M4``/``M5``; the CWT reference loads it with a resistor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

from scipy.optimize import brentq

from ._numerics import RTOL, safeguarded_newton
from .device_models import (
    K_OVER_Q,
    Geometry,
    OperatingPoint,
    ResistorParams,
    TransistorParams,
    gate_voltage_for_current,
    inversion_level_from_overdrive,
    overdrive_from_inversion_level,
    resistance,
    resistance_slope,
    small_signal,
    specific_sheet_current,
    thermal_voltage,
    threshold_voltage,
)
from .errors import ConfigurationError, DomainError, NumericError

STACK_VARIANTS = ("single", "stacked", "sbb", "hybrid")
CONSTRAINT_TOLERANCE = 0.05


@dataclass(frozen=True)
class Device:
    params: TransistorParams
    geom: Geometry

    @property
    def aspect(self) -> float:
        return self.geom.aspect

    def pelgrom_sigma(self) -> float:
        """Standard deviation of the V_T0 mismatch for this device."""
        if self.params.a_vt is None:
            raise ConfigurationError(
                f"device type {self.params.name!r} has no Pelgrom coefficient (a_vt)")
        return self.params.a_vt / math.sqrt(self.geom.area)


@dataclass(frozen=True)
class TwoTVref:
    """The 2T reference. ``stack`` only changes the small-signal line
    sensitivity; the DC model uses ``m2``'s geometry as given."""

    m1: Device
    m2: Device
    stack: str = "single"
    stack_count: int = 1

    def __post_init__(self):
        if self.stack not in STACK_VARIANTS:
            raise DomainError(f"unknown stack variant {self.stack!r}")
        if self.stack_count < 1:
            raise DomainError("stack_count must be >= 1")

    @property
    def ratio(self) -> float:
        """S2/S1."""
        return self.m2.aspect / self.m1.aspect


@dataclass(frozen=True)
class CalibrationConfig:
    """Code-to-ratio map of the M1 width trim.

    W1 falls linearly with the code, so W2/W1 runs from ``ratio_min`` at code
    0 to ``ratio_max`` at the top code.
    """

    bits: int = 4
    ratio_min: float = 0.37
    ratio_max: float = 0.83

    def __post_init__(self):
        if self.bits < 1:
            raise DomainError("calibration needs at least one bit")
        if not 0.0 < self.ratio_min < self.ratio_max:
            raise DomainError("calibration needs 0 < ratio_min < ratio_max")

    @property
    def n_codes(self) -> int:
        return 2 ** self.bits

    def ratio(self, code: int) -> float:
        if not 0 <= code < self.n_codes:
            raise DomainError(f"code {code} outside [0, {self.n_codes - 1}]")
        frac = code / (self.n_codes - 1)
        inv = 1.0 / self.ratio_min + (1.0 / self.ratio_max - 1.0 / self.ratio_min) * frac
        return 1.0 / inv


@dataclass(frozen=True)
class PtatReference:
    vref: TwoTVref
    m6: Device
    m7: Device
    alpha: float
    n_mirror: int = 1
    m3: Optional[Device] = None  # buffer
    m4: Optional[Device] = None  # mirror input; M5 is N times M4
    vdd_nominal: float = 1.2

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise DomainError(f"alpha must exceed 1 (got {self.alpha!r})")
        if self.n_mirror < 1:
            raise DomainError("n_mirror must be >= 1")

    @property
    def m5(self) -> Optional[Device]:
        if self.m4 is None:
            return None
        return Device(self.m4.params, replace(self.m4.geom, mult=self.m4.geom.mult * self.n_mirror))

    def devices(self) -> dict:
        out = {"m1": self.vref.m1, "m2": self.vref.m2, "m3": self.m3, "m4": self.m4,
               "m5": self.m5, "m6": self.m6, "m7": self.m7}
        return {k: v for k, v in out.items() if v is not None}


@dataclass(frozen=True)
class CwtReference:
    vref: TwoTVref
    resistor: ResistorParams
    squares: float
    calibration: Optional[CalibrationConfig] = None
    code: Optional[int] = None
    m3: Optional[Device] = None
    m4: Optional[Device] = None
    vdd_nominal: float = 1.2

    def __post_init__(self):
        if not self.squares > 0.0:
            raise DomainError("resistor squares must be positive")
        if self.code is not None:
            if self.calibration is None:
                raise DomainError("a calibration code needs a calibration config")
            self.calibration.ratio(self.code)

    def with_code(self, code: Optional[int]) -> "CwtReference":
        return replace(self, code=code)

    def effective_vref(self) -> TwoTVref:
        """The 2T pair with M1 resized to the selected calibration code."""
        if self.code is None:
            return self.vref
        target = self.calibration.ratio(self.code)
        m1 = self.vref.m1
        s1 = self.vref.m2.aspect / target
        geom = replace(m1.geom, w=m1.geom.w * s1 / m1.aspect)
        return replace(self.vref, m1=Device(m1.params, geom))

    def devices(self) -> dict:
        v = self.effective_vref()
        out = {"m1": v.m1, "m2": v.m2, "m3": self.m3, "m4": self.m4}
        return {k: d for k, d in out.items() if d is not None}


class ReferenceOutput(NamedTuple):
    i_ref: float
    v_ref: float
    power: float


# --- 2T voltage reference -------------------------------------------------

def _log_current_ratio(v: TwoTVref, t: float) -> float:
    """ln(I_SQ2 S2 / (I_SQ1 S1))."""
    p1, p2 = v.m1.params, v.m2.params
    num = specific_sheet_current(p2, t) * v.m2.aspect
    den = specific_sheet_current(p1, t) * v.m1.aspect
    if not (num > 0.0 and den > 0.0):
        raise DomainError("2T current ratio must be positive")
    return math.log(num / den)


def vref_2t(v: TwoTVref, t: float) -> float:
    """Closed-form V_REF for both transistors saturated in weak inversion."""
    p1, p2 = v.m1.params, v.m2.params
    ut = thermal_voltage(t)
    vt1, vt2 = threshold_voltage(p1, t), threshold_voltage(p2, t)
    return p1.n * ut * _log_current_ratio(v, t) + (p2.n * vt1 - p1.n * vt2) / p2.n


def vref_threshold_gains(v: TwoTVref):
    """(dV_REF/dV_T01, dV_REF/dV_T02) of the closed form."""
    return 1.0, -v.m1.params.n / v.m2.params.n


def branch_current_2t(v: TwoTVref, t: float) -> float:
    """Current of the 2T branch: M2 at zero V_GS, saturated."""
    p2 = v.m2.params
    ut = thermal_voltage(t)
    return specific_sheet_current(p2, t) * v.m2.aspect * math.exp(
        -threshold_voltage(p2, t) / (p2.n * ut))


def vref_2t_supply(v: TwoTVref, t: float, vdd: float, v_buffer: float = 0.0) -> float:
    """V_REF at a finite supply, including Early and triode factors.

    M1's drain sits ``v_buffer`` above V_REF (the buffer's V_GS) and M2 takes
    the remaining headroom. Solves ln I1 = ln I2, which is strictly monotone in
    V_REF over the open interval where both V_DS are positive.
    """
    p1, p2 = v.m1.params, v.m2.params
    g1, g2 = v.m1.geom, v.m2.geom
    ut = thermal_voltage(t)
    lo, hi = -v_buffer, vdd - v_buffer
    if not hi > lo:
        raise DomainError(f"supply {vdd!r} V leaves no headroom for the 2T reference")
    ea1 = p1.v_ea_per_um * g1.l_eff
    ea2 = p2.v_ea_per_um * g2.l_eff
    k1 = math.log(specific_sheet_current(p1, t) * g1.aspect) - threshold_voltage(p1, t) / (p1.n * ut)
    k2 = math.log(specific_sheet_current(p2, t) * g2.aspect) - threshold_voltage(p2, t) / (p2.n * ut)

    def log_triode(x):
        return math.log(-math.expm1(-x / ut))

    def dlog_triode(x):
        return 1.0 / (ut * math.expm1(x / ut))

    def f(vr):
        x1, x2 = vr + v_buffer, vdd - vr - v_buffer
        ln_i1 = k1 + vr / (p1.n * ut) + math.log1p(x1 / ea1) + log_triode(x1)
        ln_i2 = k2 + math.log1p(x2 / ea2) + log_triode(x2)
        return ln_i1 - ln_i2

    def fprime(vr):
        x1, x2 = vr + v_buffer, vdd - vr - v_buffer
        return (1.0 / (p1.n * ut) + 1.0 / (ea1 + x1) + dlog_triode(x1)
                + 1.0 / (ea2 + x2) + dlog_triode(x2))

    eps = 1e-12 * max(ut, hi - lo)
    guess = min(max(vref_2t(v, t), lo + eps), hi - eps)
    return safeguarded_newton(f, fprime, lo + eps, hi - eps, x0=guess, rtol=RTOL)


def ls_enhanced(variant: str, count: int, g_m1: float, g_d1: float,
                g_d2: Sequence[float], g_mb2: Sequence[float] = ()) -> float:
    """v_ref/v_dd of the line-sensitivity enhanced stacks.

    ``g_d2`` and ``g_mb2`` list the conductances of the stack devices from the
    bottom (``M2,1``) up. SBB and hybrid stacks share one expression; they
    differ through the conductances each bias point produces.
    """
    if variant not in STACK_VARIANTS:
        raise DomainError(f"unknown stack variant {variant!r}")
    if count not in (1, 2, 3):
        raise DomainError(f"stack of {count} devices is not supported (1, 2 or 3)")
    if g_m1 == 0.0:
        raise NumericError("g_m1 is zero")
    if len(g_d2) < count:
        raise DomainError(f"need {count} output conductances, got {len(g_d2)}")
    if count == 1 or variant == "single":
        return g_d2[0] / g_m1
    if variant == "stacked":
        return g_d2[0] / g_m1 / count
    if len(g_mb2) < count:
        raise DomainError(f"need {count} body transconductances, got {len(g_mb2)}")
    out = g_d2[0] / (g_m1 + g_d1) * g_d2[1] / (g_mb2[1] + g_d2[0] + g_d2[1])
    if count == 3:
        out *= g_d2[2] / (g_mb2[2] + g_d2[2])
    return out


def vref_conductances(v: TwoTVref, t: float):
    """(g_m1, g_d1, g_d2, g_mb2) of the 2T pair at its closed-form bias."""
    i_d = branch_current_2t(v, t)
    ops = []
    for dev in (v.m1, v.m2):
        i_f = i_d / (specific_sheet_current(dev.params, t) * dev.aspect)
        op = OperatingPoint(0.0, 0.0, 0.0, i_f, 0.0, i_d)
        ops.append(small_signal(dev.params, dev.geom, op, t))
    (g_m1, g_d1, _), (_, g_d2, g_mb2) = ops
    return g_m1, g_d1, g_d2, g_mb2


def vref_line_sensitivity(v: TwoTVref, t: float) -> float:
    """Small-signal v_ref/v_dd (V/V) from device conductances at the solved bias.

    Stacked variants treat the ``stack_count`` devices as identical copies of
    ``m2`` carrying the branch current.
    """
    g_m1, g_d1, g_d2, g_mb2 = vref_conductances(v, t)
    if g_m1 == 0.0:
        raise NumericError("g_m1 is zero")
    if v.stack == "single" or v.stack_count == 1:
        return g_d2 / g_m1
    n = v.stack_count
    return ls_enhanced(v.stack, n, g_m1, g_d1, [g_d2] * n, [g_mb2] * n)


def sigma_vref(v: TwoTVref) -> float:
    """Local-mismatch standard deviation of V_REF (Pelgrom on both devices)."""
    d1, d2 = vref_threshold_gains(v)
    s1, s2 = v.m1.pelgrom_sigma(), v.m2.pelgrom_sigma()
    return math.hypot(d1 * s1, d2 * s2)


# --- self-cascode (PTAT) --------------------------------------------------

def _scm_rhs(i_f7, alpha):
    a = math.sqrt(1.0 + alpha * i_f7)
    b = math.sqrt(1.0 + i_f7)
    am1 = alpha * i_f7 / (a + 1.0)
    bm1 = i_f7 / (b + 1.0)
    return (am1 - bm1) + math.log(alpha * (b + 1.0) / (a + 1.0)), am1, bm1


def scm_vref_over_nut(i_f7: float, alpha: float) -> float:
    """Right-hand side of the SCM equation, V_REF/(n U_T), for a given i_f7."""
    if not i_f7 > 0.0:
        raise DomainError("i_f7 must be positive")
    return _scm_rhs(i_f7, alpha)[0]


def solve_scm(v_ref: float, alpha: float, n: float, t: float):
    """Inversion levels ``(i_f7, i_f6)`` of the self-cascode pair.

    The normalised right-hand side rises strictly from ln(alpha) at i_f7 -> 0,
    so ``V_REF`` must exceed ``n U_T ln(alpha)``. Newton runs on ln(i_f7).
    """
    if not alpha > 1.0:
        raise DomainError(f"alpha must exceed 1 (got {alpha!r})")
    y = v_ref / (n * thermal_voltage(t))
    y_min = math.log(alpha)
    if not y > y_min:
        raise DomainError(
            f"V_REF = {v_ref!r} V is below n*U_T*ln(alpha) = {y_min * n * thermal_voltage(t)!r} V")

    def f(s):
        return _scm_rhs(math.exp(s), alpha)[0] - y

    def fprime(s):
        i = math.exp(s)
        _, am1, bm1 = _scm_rhs(i, alpha)
        return 0.5 * i * (alpha / am1 - 1.0 / bm1)

    lo, hi = math.log(1e-12), math.log(1e6)
    while f(lo) > 0.0 and lo > -700.0:
        lo -= 10.0
    while f(hi) < 0.0 and hi < 700.0:
        hi += 10.0
    s = safeguarded_newton(f, fprime, lo, hi, x0=0.0, rtol=1e-15)
    i_f7 = math.exp(s)
    return i_f7, alpha * i_f7


def scm_aspect_ratio_constraint(p6: TransistorParams, p7: TransistorParams, alpha: float,
                                n_mirror: int) -> float:
    """S6/S7 that makes the SCM carry (N+1)/N of M7's current in M6."""
    if not alpha > 1.0:
        raise DomainError(f"alpha must exceed 1 (got {alpha!r})")
    return (p7.i_sq_ref / p6.i_sq_ref) * (n_mirror + 1) / n_mirror / (alpha - 1.0)


def sensitivity_ptat(i_f7: float, alpha: float, n: float, t: float) -> float:
    """S_IREF = d ln(I_REF)/d V_REF in 1/V."""
    if not (i_f7 > 0.0 and alpha > 1.0):
        raise DomainError("need i_f7 > 0 and alpha > 1")
    _, am1, bm1 = _scm_rhs(i_f7, alpha)
    bracket = alpha / am1 - 1.0 / bm1
    if not bracket > 0.0:
        raise DomainError("sensitivity bracket is not positive")
    return 2.0 / (i_f7 * n * thermal_voltage(t)) / bracket


def _check_scm_sizing(r: PtatReference):
    want = scm_aspect_ratio_constraint(r.m6.params, r.m7.params, r.alpha, r.n_mirror)
    got = r.m6.aspect / r.m7.aspect
    if abs(got / want - 1.0) > CONSTRAINT_TOLERANCE:
        raise DomainError(
            f"S6/S7 = {got:.4g} deviates from the required {want:.4g} by more than "
            f"{CONSTRAINT_TOLERANCE:.0%}")


def ptat_iref_from_vref(r: PtatReference, v_ref: float, t: float) -> float:
    p7 = r.m7.params
    i_f7, _ = solve_scm(v_ref, r.alpha, p7.n, t)
    return specific_sheet_current(p7, t) * r.m7.aspect * i_f7 / r.n_mirror


def _buffer_drop(dev: Optional[Device], i_branch: float, t: float) -> float:
    if dev is None:
        return 0.0
    return gate_voltage_for_current(dev.params, dev.geom, i_branch, t)


def ptat_iref(r: PtatReference, t: float, vdd: Optional[float] = None) -> ReferenceOutput:
    """I_REF, V_REF and supply power of the PTAT reference.

    With ``vdd=None`` V_REF is the closed form and power is evaluated at
    ``r.vdd_nominal``; otherwise V_REF is solved at that supply.
    """
    _check_scm_sizing(r)
    v_ref = vref_2t(r.vref, t)
    if vdd is None:
        i_ref = ptat_iref_from_vref(r, v_ref, t)
        i_2t = branch_current_2t(r.vref, t)
        vdd = r.vdd_nominal
    else:
        i_nom = ptat_iref_from_vref(r, v_ref, t)
        v_buf = _buffer_drop(r.m3, i_nom, t)
        v_ref = vref_2t_supply(r.vref, t, vdd, v_buf)
        i_ref = ptat_iref_from_vref(r, v_ref, t)
        i_2t = _supply_branch_current(r.vref, t, vdd, v_ref, v_buf)
    return ReferenceOutput(i_ref, v_ref, vdd * (i_2t + (r.n_mirror + 1) * i_ref))


def _supply_branch_current(v: TwoTVref, t, vdd, v_ref, v_buf):
    p2, g2 = v.m2.params, v.m2.geom
    x2 = vdd - v_ref - v_buf
    ut = thermal_voltage(t)
    return branch_current_2t(v, t) * (1.0 + x2 / (p2.v_ea_per_um * g2.l_eff)) * -math.expm1(-x2 / ut)


def scm_full_solve(r: PtatReference, v_ref: float, t: float, delta_vt6: float = 0.0,
                   delta_vt7: float = 0.0, mirror_gain: float = 1.0) -> float:
    """I_REF from a KCL solve of the SCM with its actual S6 and mismatch.

    ``delta_vt6``/``delta_vt7`` shift the thresholds of the pair and
    ``mirror_gain`` scales the M5/M4 mirror ratio. With no mismatch and S6 on
    its constraint this reproduces :func:`ptat_iref_from_vref`.
    """
    p6, p7 = r.m6.params, r.m7.params
    n = p7.n
    ut = thermal_voltage(t)
    y = v_ref / (n * ut)
    d = -(delta_vt6 - delta_vt7) / (n * ut)
    n_eff = r.n_mirror * mirror_gain
    k6 = specific_sheet_current(p6, t) * r.m6.aspect
    k7 = specific_sheet_current(p7, t) * r.m7.aspect * (1.0 + 1.0 / n_eff)

    def big_f(i):
        return overdrive_from_inversion_level(i, t) / ut

    def inv_f(x):
        return inversion_level_from_overdrive(x * ut, t)

    def resid(s):
        i7 = math.exp(s)
        i_r6 = inv_f(big_f(i7) + d)
        i_f6 = inv_f(y + big_f(i_r6))
        return math.log(k6 * (i_f6 - i_r6)) - math.log(k7 * i7)

    lo, hi = math.log(1e-12), math.log(1e8)
    try:
        s = brentq(resid, lo, hi, xtol=1e-14, rtol=1e-13, maxiter=200)
    except ValueError as exc:
        raise NumericError(f"SCM solve not bracketed: {exc}") from exc
    return specific_sheet_current(p7, t) * r.m7.aspect * math.exp(s) / n_eff


# --- resistor-loaded (CWT) ------------------------------------------------

def cwt_iref(r: CwtReference, t: float, vdd: Optional[float] = None) -> ReferenceOutput:
    v = r.effective_vref()
    v_ref = vref_2t(v, t)
    res = resistance(r.resistor, r.squares, t)
    if vdd is None:
        i_2t = branch_current_2t(v, t)
        vdd = r.vdd_nominal
    else:
        v_buf = _buffer_drop(r.m3, v_ref / res, t) if v_ref > 0.0 else 0.0
        v_ref = vref_2t_supply(v, t, vdd, v_buf)
        i_2t = _supply_branch_current(v, t, vdd, v_ref, v_buf)
    i_ref = v_ref / res
    return ReferenceOutput(i_ref, v_ref, vdd * (i_2t + 2.0 * i_ref))


def _vref_slope(v: TwoTVref, t: float) -> float:
    """dV_REF/dT of the closed form with the I_SQ ratio held constant."""
    p1, p2 = v.m1.params, v.m2.params
    return (p1.n * K_OVER_Q * _log_current_ratio(v, t)
            - (p1.alpha_vt0 - p1.n / p2.n * p2.alpha_vt0))


def cwt_diref_dt(r: CwtReference, t: float) -> float:
    """dI_REF/dT in A/K.

    Exact derivative of V_REF/R when both 2T flavours share the mobility
    exponent; otherwise the I_SQ-ratio drift is neglected.
    """
    v = r.effective_vref()
    res = resistance(r.resistor, r.squares, t)
    d_res = resistance_slope(r.resistor, r.squares, t)
    return _vref_slope(v, t) / res - vref_2t(v, t) * d_res / res ** 2


def cwt_optimal_ratio(p1: TransistorParams, p2: TransistorParams, res: ResistorParams,
                      t0: float) -> float:
    """S2/S1 that zeroes dI_REF/dT at ``t0``."""
    tcr = resistance_slope(res, 1.0, t0) / resistance(res, 1.0, t0)
    denom = 1.0 - t0 * tcr
    if abs(denom) < 1e-12:
        raise DomainError("degenerate resistor tempco: 1 - T0*TCR vanishes")
    dvt = (p2.n * threshold_voltage(p1, t0) - p1.n * threshold_voltage(p2, t0)) / p2.n
    dalpha = p1.alpha_vt0 - p1.n / p2.n * p2.alpha_vt0
    expo = (dvt * tcr + dalpha) / (p1.n * K_OVER_Q * denom)
    isq_ratio = specific_sheet_current(p1, t0) / specific_sheet_current(p2, t0)
    return isq_ratio * math.exp(expo)


# --- shared -----------------------------------------------------------------

def propagate_ls_and_mismatch(s_iref: float, vref_ls: float, sigma_vref_: float):
    """(LS of I_REF in 1/V, sigma/mu of I_REF)."""
    if sigma_vref_ < 0.0:
        raise DomainError("sigma_vref must be non-negative")
    return s_iref * vref_ls, s_iref * sigma_vref_


def iref_sensitivity(r, t: float) -> float:
    """S_IREF of either reference at its closed-form bias."""
    if isinstance(r, PtatReference):
        v_ref = vref_2t(r.vref, t)
        i_f7, _ = solve_scm(v_ref, r.alpha, r.m7.params.n, t)
        return sensitivity_ptat(i_f7, r.alpha, r.m7.params.n, t)
    return 1.0 / vref_2t(r.effective_vref(), t)


def reference_output(r, t: float, vdd: Optional[float] = None) -> ReferenceOutput:
    if isinstance(r, PtatReference):
        return ptat_iref(r, t, vdd)
    if isinstance(r, CwtReference):
        return cwt_iref(r, t, vdd)
    raise TypeError(f"not a reference design: {type(r).__name__}")


def vdd_min(r, t: float) -> float:
    """Lowest supply keeping every branch 4 U_T above its stacked drops."""
    ut = thermal_voltage(t)
    if isinstance(r, PtatReference):
        v_ref = vref_2t(r.vref, t)
        i_f7, i_f6 = solve_scm(v_ref, r.alpha, r.m7.params.n, t)
        i_ref = specific_sheet_current(r.m7.params, t) * r.m7.aspect * i_f7 / r.n_mirror
        p6 = r.m6.params
        v_g = threshold_voltage(p6, t) + p6.n * overdrive_from_inversion_level(i_f6, t)
        branches = [v_ref + _buffer_drop(r.m3, i_ref, t), v_ref + _buffer_drop(r.m4, i_ref, t), v_g]
    elif isinstance(r, CwtReference):
        v_ref = vref_2t(r.effective_vref(), t)
        i_ref = v_ref / resistance(r.resistor, r.squares, t)
        branches = [v_ref + _buffer_drop(r.m3, i_ref, t), v_ref + _buffer_drop(r.m4, i_ref, t)]
    else:
        raise TypeError(f"not a reference design: {type(r).__name__}")
    return 4.0 * ut + max(branches)
