"""Geometry generation for the PTAT and CWT references, design-space grids
and calibration-code selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import box_tc, sweep
from .device_models import (
    T_REF_DEFAULT,
    Geometry,
    ResistorParams,
    TransistorParams,
    resistance,
    specific_sheet_current,
    thermal_voltage,
    threshold_voltage,
)
from .errors import DomainError, SizingError
from .reference_circuits import (
    CalibrationConfig,
    CwtReference,
    Device,
    PtatReference,
    TwoTVref,
    branch_current_2t,
    cwt_optimal_ratio,
    iref_sensitivity,
    propagate_ls_and_mismatch,
    reference_output,
    scm_aspect_ratio_constraint,
    sensitivity_ptat,
    sigma_vref,
    solve_scm,
    vdd_min,
    vref_2t,
    vref_line_sensitivity,
)

WIDTH_GRID = 0.01  # um
MIN_WIDTH = 0.22  # um


def snap_width(w: float, grid: float = WIDTH_GRID) -> float:
    """Nearest multiple of ``grid``; exact halves go to the wider device."""
    if not (w > 0.0 and math.isfinite(w)):
        raise SizingError(f"cannot realize width {w!r} um")
    steps = (Decimal(repr(w)) / Decimal(repr(grid))).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return float(steps * Decimal(repr(grid)))


def _width_for(aspect: float, length: float, role: str, min_width: float) -> float:
    w = snap_width(aspect * length)
    if w < min_width:
        raise SizingError(
            f"{role}: needs W = {aspect * length:.4g} um at L = {length:g} um, below the "
            f"{min_width:g} um minimum; raise its current or shorten it")
    return w


def _lookup(deck, name: str, kind: str = "transistor"):
    table = deck.transistors if kind == "transistor" else deck.resistors
    try:
        return table[name]
    except KeyError:
        raise SizingError(f"deck has no {kind} type {name!r}") from None


@dataclass(frozen=True)
class SizingResult:
    """A sized design with the figures predicted at ``t_ref``.

    ``predictions`` holds SI values: ``v_ref`` (V), ``i_ref`` (A), ``s_iref``
    (1/V), ``vref_ls`` (V/V), ``ls`` (1/V), ``sigma_vref`` (V),
    ``sigma_over_mu``, ``vdd_min`` (V), plus kind-specific entries.
    """

    kind: str
    design: object
    geometries: Mapping[str, tuple]  # role -> (device type, Geometry)
    predictions: Mapping[str, float]
    resistor: Optional[str] = None
    squares: Optional[float] = None
    grids: Mapping[str, object] = field(default_factory=dict)


def _common_predictions(design, t, a_vt_known: bool) -> Dict[str, float]:
    out = reference_output(design, t)
    s = iref_sensitivity(design, t)
    vref = design.vref if isinstance(design, PtatReference) else design.effective_vref()
    vls = vref_line_sensitivity(vref, t)
    pred = {"v_ref": out.v_ref, "i_ref": out.i_ref, "power": out.power, "s_iref": s,
            "vref_ls": vls, "ls": s * vls, "vdd_min": vdd_min(design, t)}
    if a_vt_known:
        sv = sigma_vref(vref)
        pred["sigma_vref"] = sv
        pred["sigma_over_mu"] = propagate_ls_and_mismatch(s, vls, sv)[1]
    return pred


def _has_avt(*devices):
    return all(d.params.a_vt is not None for d in devices)


# --- PTAT -------------------------------------------------------------------

@dataclass(frozen=True)
class PtatSizingSpec:
    """Inputs of the PTAT sizing flow. Lengths and widths in um.

    ``m`` multiplies the unit M1 device; M2 is ``s2_over_s1`` times M1.
    ``target_sensitivity`` (1/V) is optional and only reported against.
    """

    target_iref: float = 1e-10
    s2_over_s1: float = 8.0
    alpha: float = 3.0
    n_mirror: int = 2
    m: int = 4
    vref_device: str = "lvt_pmos"
    scm_device: str = "lvt_pmos"
    buffer_device: str = "lvt_pmos"
    mirror_device: str = "lvt_nmos"
    unit_w: float = 1.0
    unit_l: float = 20.0
    scm_segment_l: float = 25.0
    scm_series: int = 20
    buffer_l: float = 10.0
    buffer_if: float = 0.12
    mirror_segment_l: float = 25.0
    mirror_series: int = 2
    mirror_if: float = 0.05
    target_sensitivity: Optional[float] = None
    t_ref: float = T_REF_DEFAULT
    vdd: float = 1.2
    min_width: float = MIN_WIDTH

    def __post_init__(self):
        if not self.target_iref > 0.0:
            raise DomainError("target_iref must be positive")
        if not self.alpha > 1.0:
            raise DomainError("alpha must exceed 1")
        if not self.s2_over_s1 > 1.0:
            raise DomainError("s2_over_s1 must exceed 1")
        if self.n_mirror < 1 or self.m < 1 or self.scm_series < 1 or self.mirror_series < 1:
            raise DomainError("n_mirror, m and series counts must be >= 1")
        if not (self.buffer_if > 0.0 and self.mirror_if > 0.0):
            raise DomainError("buffer and mirror inversion levels must be positive")


def ptat_vref_pair(p: TransistorParams, m: int, s2_over_s1: float, unit_w: float,
                   unit_l: float) -> TwoTVref:
    """M1 = ``m`` unit fingers; M2 = ``m*s2_over_s1`` fingers (widened when
    that is not a whole number)."""
    fingers = m * s2_over_s1
    if abs(fingers - round(fingers)) < 1e-9:
        g2 = Geometry(unit_w, unit_l, mult=int(round(fingers)))
    else:
        g2 = Geometry(unit_w * s2_over_s1, unit_l, mult=m)
    return TwoTVref(Device(p, Geometry(unit_w, unit_l, mult=m)), Device(p, g2))


def size_ptat(spec: PtatSizingSpec, deck) -> SizingResult:
    p_ref = _lookup(deck, spec.vref_device)
    p_scm = _lookup(deck, spec.scm_device)
    p_buf = _lookup(deck, spec.buffer_device)
    p_mir = _lookup(deck, spec.mirror_device)
    t = spec.t_ref

    vref = ptat_vref_pair(p_ref, spec.m, spec.s2_over_s1, spec.unit_w, spec.unit_l)
    v_ref = vref_2t(vref, t)
    try:
        i_f7, i_f6 = solve_scm(v_ref, spec.alpha, p_scm.n, t)
    except DomainError as exc:
        raise SizingError(f"no self-cascode bias for this V_REF: {exc}") from exc
    s_iref = sensitivity_ptat(i_f7, spec.alpha, p_scm.n, t)

    s7 = spec.n_mirror * spec.target_iref / (specific_sheet_current(p_scm, t) * i_f7)
    s6 = s7 * scm_aspect_ratio_constraint(p_scm, p_scm, spec.alpha, spec.n_mirror)
    series = 1 if min(s6, s7) * spec.scm_segment_l >= 1.0 else spec.scm_series
    l_scm = series * spec.scm_segment_l
    g6 = Geometry(_width_for(s6, l_scm, "M6", spec.min_width), spec.scm_segment_l, series=series)
    g7 = Geometry(_width_for(s7, l_scm, "M7", spec.min_width), spec.scm_segment_l, series=series)

    s3 = spec.target_iref / (specific_sheet_current(p_buf, t) * spec.buffer_if)
    g3 = Geometry(_width_for(s3, spec.buffer_l, "M3", spec.min_width), spec.buffer_l)
    s4 = spec.target_iref / (specific_sheet_current(p_mir, t) * spec.mirror_if)
    l_mir = spec.mirror_series * spec.mirror_segment_l
    g4 = Geometry(_width_for(s4, l_mir, "M4", spec.min_width), spec.mirror_segment_l,
                  series=spec.mirror_series)

    design = PtatReference(vref, Device(p_scm, g6), Device(p_scm, g7), spec.alpha,
                           spec.n_mirror, m3=Device(p_buf, g3), m4=Device(p_mir, g4),
                           vdd_nominal=spec.vdd)
    pred = _common_predictions(design, t, _has_avt(vref.m1, vref.m2))
    pred.update(s6=s6, s7=s7, i_f7=i_f7, i_f6=i_f6, s3=s3, s4=s4)
    if spec.target_sensitivity is not None:
        pred["sensitivity_error"] = s_iref / spec.target_sensitivity - 1.0
    geoms = {"m1": (p_ref.name, vref.m1.geom), "m2": (p_ref.name, vref.m2.geom),
             "m3": (p_buf.name, g3), "m4": (p_mir.name, g4),
             "m5": (p_mir.name, design.m5.geom), "m6": (p_scm.name, g6), "m7": (p_scm.name, g7)}
    return SizingResult("ptat", design, geoms, pred)


def explore_ptat_space(ratios: Sequence[float], alphas: Sequence[float], n: float,
                       t: float = T_REF_DEFAULT) -> Dict[str, np.ndarray]:
    """S_IREF (1/V), i_f7 and V_REF/U_T over an ``alphas`` x ``ratios`` grid.

    Points whose V_REF is too small to bias the self-cascode are NaN.
    """
    ratios = np.asarray(ratios, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if np.any(ratios <= 1.0) or np.any(alphas <= 1.0):
        raise DomainError("grid ratios and alphas must exceed 1")
    ut = thermal_voltage(t)
    vref = n * ut * np.log(ratios)
    sens = np.full((len(alphas), len(ratios)), np.nan)
    i_f7 = np.full_like(sens, np.nan)
    for a, alpha in enumerate(alphas):
        for r, v in enumerate(vref):
            try:
                i, _ = solve_scm(float(v), float(alpha), n, t)
            except DomainError:
                continue
            i_f7[a, r] = i
            sens[a, r] = sensitivity_ptat(i, float(alpha), n, t)
    return {"ratios": ratios, "alphas": alphas, "sensitivity": sens, "i_f7": i_f7,
            "vref_over_ut": vref / ut}


def explore_vref_tradeoff(ms: Sequence[int], ratios: Sequence[float], p: TransistorParams,
                          unit_w: float = 1.0, unit_l: float = 20.0, t: float = T_REF_DEFAULT,
                          vdd: float = 1.2) -> Dict[str, np.ndarray]:
    """σ_VREF (V) and 2T power (W) over an ``ms`` x ``ratios`` grid."""
    sig = np.empty((len(ms), len(ratios)))
    power = np.empty_like(sig)
    for a, m in enumerate(ms):
        for r, ratio in enumerate(ratios):
            v = ptat_vref_pair(p, int(m), float(ratio), unit_w, unit_l)
            sig[a, r] = sigma_vref(v)
            power[a, r] = vdd * branch_current_2t(v, t)
    return {"ms": np.asarray(ms), "ratios": np.asarray(ratios, dtype=float),
            "sigma_vref": sig, "power": power}


# --- CWT --------------------------------------------------------------------

@dataclass(frozen=True)
class CwtSizingSpec:
    """Inputs of the CWT sizing flow. M1 needs the larger threshold.

    ``resistor=None`` picks the flavour with the smallest |TCR|; M1's width
    follows from the zero-TC ratio at the fixed M2 width ``w2``.
    """

    target_iref: float = 1e-6
    m1_device: str = "rvt_pmos"
    m2_device: str = "lvt_pmos"
    length: float = 5.0
    w2: float = 1.25
    mult: int = 4
    resistor: Optional[str] = None
    buffer_device: str = "lvt_pmos"
    mirror_device: str = "lvt_nmos"
    mirror_w: float = 10.0
    mirror_l: float = 1.0
    mirror_mult: int = 10
    calibration: Optional[CalibrationConfig] = None
    t_ref: float = T_REF_DEFAULT
    vdd: float = 1.2
    min_width: float = MIN_WIDTH

    def __post_init__(self):
        if not self.target_iref > 0.0:
            raise DomainError("target_iref must be positive")
        if not (self.length > 0.0 and self.w2 > 0.0) or self.mult < 1:
            raise DomainError("M1/M2 geometry must be positive")


def pick_low_tcr_resistor(resistors: Mapping[str, ResistorParams]) -> ResistorParams:
    if not resistors:
        raise SizingError("deck has no resistor flavours")
    return min(resistors.values(), key=lambda r: (abs(r.tcr1), r.name))


def size_cwt(spec: CwtSizingSpec, deck) -> SizingResult:
    p1 = _lookup(deck, spec.m1_device)
    p2 = _lookup(deck, spec.m2_device)
    t = spec.t_ref
    if not threshold_voltage(p1, t) > threshold_voltage(p2, t):
        raise SizingError(
            f"M1 ({p1.name}) needs a larger threshold voltage than M2 ({p2.name})")
    res = (pick_low_tcr_resistor(deck.resistors) if spec.resistor is None
           else _lookup(deck, spec.resistor, "resistor"))

    ratio = cwt_optimal_ratio(p1, p2, res, t)
    # equal lengths, so W2/W1 is the aspect ratio S2/S1
    w1 = _width_for(spec.w2 / ratio, 1.0, "M1", spec.min_width)
    g1 = Geometry(w1, spec.length, mult=spec.mult)
    g2 = Geometry(spec.w2, spec.length, mult=spec.mult)
    vref = TwoTVref(Device(p1, g1), Device(p2, g2))
    v_ref = vref_2t(vref, t)
    if not v_ref > 0.0:
        raise SizingError(f"zero-TC sizing gives a non-positive V_REF ({v_ref:.4g} V)")
    squares = v_ref / (spec.target_iref * resistance(res, 1.0, t))

    p3 = _lookup(deck, spec.buffer_device)
    p4 = _lookup(deck, spec.mirror_device)
    gm = Geometry(spec.mirror_w, spec.mirror_l, mult=spec.mirror_mult)
    design = CwtReference(vref, res, squares, calibration=spec.calibration,
                          m3=Device(p3, gm), m4=Device(p4, gm), vdd_nominal=spec.vdd)
    pred = _common_predictions(design, t, _has_avt(vref.m1, vref.m2))
    pred.update(ratio=ratio, realized_ratio=vref.ratio)
    geoms = {"m1": (p1.name, g1), "m2": (p2.name, g2), "m3": (p3.name, gm), "m4": (p4.name, gm)}
    return SizingResult("cwt", design, geoms, pred, resistor=res.name, squares=squares)


def calibration_tcs(r: CwtReference, t_min: float, t_max: float, t_step: float,
                    vdd: Optional[float] = None) -> np.ndarray:
    """Box TC (ppm/°C) of every calibration code over one temperature sweep."""
    if r.calibration is None:
        raise DomainError("design has no calibration configuration")
    return np.array([box_tc(sweep(r.with_code(c), "temperature", t_min, t_max, t_step, vdd=vdd))
                     for c in range(r.calibration.n_codes)])


def select_calibration_code(r: CwtReference, t_min: float, t_max: float, t_step: float,
                            vdd: Optional[float] = None):
    """``(code, tcs)`` with the smallest |TC|; ties go to the lower code."""
    tcs = calibration_tcs(r, t_min, t_max, t_step, vdd)
    return int(np.argmin(np.abs(tcs))), tcs


# --- estimator-style wrappers ----------------------------------------------

class PtatSizer(BaseEstimator):
    """Self-cascode sizing as an estimator.

    ``fit`` solves the bias point (V_REF, i_f7, S_IREF) once; ``predict``
    maps a column of target currents to ``[S6, S7]`` rows.
    """

    def __init__(self, deck=None, s2_over_s1=8.0, alpha=3.0, n_mirror=2, vref_device="lvt_pmos",
                 scm_device="lvt_pmos", t_ref=T_REF_DEFAULT):
        self.deck = deck
        self.s2_over_s1 = s2_over_s1
        self.alpha = alpha
        self.n_mirror = n_mirror
        self.vref_device = vref_device
        self.scm_device = scm_device
        self.t_ref = t_ref

    def fit(self, X=None, y=None):
        if self.deck is None:
            raise DomainError("PtatSizer needs a tech deck")
        spec = PtatSizingSpec(s2_over_s1=self.s2_over_s1, alpha=self.alpha,
                              n_mirror=self.n_mirror)
        p_ref = _lookup(self.deck, self.vref_device)
        p_scm = _lookup(self.deck, self.scm_device)
        self.v_ref_ = p_ref.n * thermal_voltage(self.t_ref) * math.log(spec.s2_over_s1)
        self.i_f7_, self.i_f6_ = solve_scm(self.v_ref_, spec.alpha, p_scm.n, self.t_ref)
        self.sensitivity_ = sensitivity_ptat(self.i_f7_, spec.alpha, p_scm.n, self.t_ref)
        self.s6_over_s7_ = scm_aspect_ratio_constraint(p_scm, p_scm, spec.alpha, spec.n_mirror)
        self.isq7_ = specific_sheet_current(p_scm, self.t_ref)
        return self

    def predict(self, X):
        check_is_fitted(self, "i_f7_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != 1 or np.any(X <= 0.0):
            raise DomainError("predict expects one column of positive target currents")
        s7 = self.n_mirror * X[:, 0] / (self.isq7_ * self.i_f7_)
        return np.column_stack([s7 * self.s6_over_s7_, s7])


class CwtSizer(BaseEstimator):
    """Resistor-loaded sizing as an estimator: ``fit`` picks the resistor and
    zero-TC ratio, ``predict`` maps target currents to resistor squares."""

    def __init__(self, deck=None, m1_device="rvt_pmos", m2_device="lvt_pmos", resistor=None,
                 length=5.0, w2=1.25, mult=4, t_ref=T_REF_DEFAULT):
        self.deck = deck
        self.m1_device = m1_device
        self.m2_device = m2_device
        self.resistor = resistor
        self.length = length
        self.w2 = w2
        self.mult = mult
        self.t_ref = t_ref

    def fit(self, X=None, y=None):
        if self.deck is None:
            raise DomainError("CwtSizer needs a tech deck")
        spec = CwtSizingSpec(m1_device=self.m1_device, m2_device=self.m2_device,
                             resistor=self.resistor, length=self.length, w2=self.w2,
                             mult=self.mult, t_ref=self.t_ref)
        result = size_cwt(spec, self.deck)
        self.resistor_ = result.resistor
        self.ratio_ = result.predictions["ratio"]
        self.v_ref_ = result.predictions["v_ref"]
        self.ohm_per_square_ = resistance(self.deck.resistors[self.resistor_], 1.0, self.t_ref)
        self.design_ = result.design
        return self

    def predict(self, X):
        check_is_fitted(self, "ratio_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != 1 or np.any(X <= 0.0):
            raise DomainError("predict expects one column of positive target currents")
        return self.v_ref_ / (X[:, 0] * self.ohm_per_square_)

