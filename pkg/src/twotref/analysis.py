"""Sweeps, box-method metrics, process corners and Monte-Carlo mismatch."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .device_models import T_REF_DEFAULT, thermal_voltage
from .errors import ConfigurationError, DomainError, MetricError, NumericError, TwoTError
from .reference_circuits import (
    CwtReference,
    Device,
    PtatReference,
    iref_sensitivity,
    propagate_ls_and_mismatch,
    reference_output,
    scm_full_solve,
    sigma_vref,
    vdd_min,
    vref_2t,
    vref_2t_supply,
    _buffer_drop,
)

AXES = ("temperature", "supply")
MC_SCOPES = ("vref", "all")


def design_id(design) -> str:
    if isinstance(design, PtatReference):
        return "ptat"
    if isinstance(design, CwtReference):
        return "cwt" if design.code is None else f"cwt-code{design.code}"
    raise TypeError(f"not a reference design: {type(design).__name__}")


@dataclass(frozen=True, eq=False)
class SweepSeries:
    """One swept run. ``x`` is kelvin for temperature sweeps, volts for
    supply sweeps; ``valid`` marks points that count towards metrics."""

    axis: str
    x: np.ndarray
    i_ref: np.ndarray
    v_ref: np.ndarray
    power: np.ndarray
    valid: np.ndarray
    design_id: str = ""
    conditions: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in AXES:
            raise DomainError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        cols = [np.asarray(c, dtype=float) for c in (self.x, self.i_ref, self.v_ref, self.power)]
        valid = np.asarray(self.valid, dtype=bool)
        if len({len(c) for c in cols} | {len(valid)}) != 1:
            raise DomainError("sweep columns must have equal length")
        order = np.argsort(cols[0], kind="stable")
        cols = [c[order] for c in cols]
        valid = valid[order]
        if len(cols[0]) > 1 and not np.all(np.diff(cols[0]) > 0):
            raise DomainError("sweep x values must be distinct")
        for name, col in zip(("x", "i_ref", "v_ref", "power"), cols):
            col.flags.writeable = False
            object.__setattr__(self, name, col)
        valid.flags.writeable = False
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "conditions", dict(self.conditions))

    def __len__(self):
        return len(self.x)

    def __eq__(self, other):
        if not isinstance(other, SweepSeries):
            return NotImplemented
        same = self.axis == other.axis and self.design_id == other.design_id
        same = same and dict(self.conditions) == dict(other.conditions)
        return same and all(
            np.array_equal(a, b, equal_nan=True)
            for a, b in ((self.x, other.x), (self.i_ref, other.i_ref),
                         (self.v_ref, other.v_ref), (self.power, other.power)))\
            and np.array_equal(self.valid, other.valid)

    __hash__ = None


def sweep_points(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive grid ``start, start+step, ..., stop`` built from integer
    multiples so the end point is hit exactly when the span is a multiple."""
    if not step > 0.0:
        raise DomainError(f"sweep step must be positive, got {step!r}")
    if not stop >= start:
        raise DomainError(f"empty sweep range [{start!r}, {stop!r}]")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def sweep(design, axis: str, start: float, stop: float, step: float,
          vdd: Optional[float] = None, t: float = T_REF_DEFAULT,
          conditions: Optional[Mapping] = None) -> SweepSeries:
    """Evaluate ``design`` over a temperature (K) or supply (V) grid.

    Temperature sweeps hold ``vdd`` (``None`` is the ideal saturated model);
    supply sweeps hold ``t``. A point whose solve fails or whose supply sits
    below V_DD,min is kept with NaN outputs or flagged invalid.
    """
    if axis not in AXES:
        raise DomainError(f"sweep axis must be one of {AXES}, got {axis!r}")
    xs = sweep_points(start, stop, step)
    cols = np.full((4, len(xs)), np.nan)
    valid = np.zeros(len(xs), dtype=bool)
    for k, x in enumerate(xs):
        tk, vk = (x, vdd) if axis == "temperature" else (t, x)
        try:
            out = reference_output(design, tk, vk)
            ok = vk is None or vk >= vdd_min(design, tk)
        except (DomainError, NumericError):
            continue
        cols[1:, k] = out.i_ref, out.v_ref, out.power
        valid[k] = ok and all(math.isfinite(v) for v in out)
    cols[0] = xs
    cond = {"vdd": vdd} if axis == "temperature" else {"t": t}
    cond.update(conditions or {})
    return SweepSeries(axis, cols[0], cols[1], cols[2], cols[3], valid,
                       design_id=design_id(design), conditions=cond)


# --- box metrics ------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    """Box-method figure of merit of one sweep.

    ``value`` is %/V for supply sweeps and ppm/°C for temperature sweeps.
    """

    axis: str
    value: float
    unit: str
    i_avg: float
    i_min: float
    i_max: float
    x_min: float
    x_max: float
    n_points: int

    @property
    def ls(self) -> Optional[float]:
        return self.value if self.axis == "supply" else None

    @property
    def tc(self) -> Optional[float]:
        return self.value if self.axis == "temperature" else None


def _box(x, i, scale):
    x = np.asarray(x, dtype=float)
    i = np.asarray(i, dtype=float)
    keep = np.isfinite(x) & np.isfinite(i)
    x, i = x[keep], i[keep]
    if len(x) < 2:
        raise MetricError(f"box metric needs at least 2 valid points, got {len(x)}")
    span = x.max() - x.min()
    if not span > 0.0:
        raise MetricError("box metric needs a non-zero sweep span")
    i_avg = float(np.mean(i))
    if i_avg == 0.0:
        raise MetricError("box metric undefined for a zero mean current")
    i_min, i_max = float(i.min()), float(i.max())
    value = (i_max - i_min) / (i_avg * span) * scale
    return value, i_avg, i_min, i_max, float(x.min()), float(x.max()), len(x)


def box_ls(series: SweepSeries) -> float:
    """Line sensitivity in %/V over the valid points of a supply sweep."""
    if series.axis != "supply":
        raise MetricError("line sensitivity needs a supply sweep")
    return _box(series.x[series.valid], series.i_ref[series.valid], 100.0)[0]


def box_tc(series: SweepSeries) -> float:
    """Temperature coefficient in ppm/°C over the valid points."""
    if series.axis != "temperature":
        raise MetricError("temperature coefficient needs a temperature sweep")
    return _box(series.x[series.valid], series.i_ref[series.valid], 1e6)[0]


def box_tcr(t, r, t_ref: float = T_REF_DEFAULT) -> float:
    """Resistor tempco in 1/K: the box spread over ``R(t_ref)``, not over the
    mean. ``R(t_ref)`` is linearly interpolated when ``t_ref`` is off-grid."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if len(t) < 2 or len(t) != len(r):
        raise MetricError("TCR extraction needs at least 2 (t, R) pairs")
    order = np.argsort(t)
    t, r = t[order], r[order]
    if not t[0] <= t_ref <= t[-1]:
        raise MetricError("t_ref lies outside the swept range")
    return float((r.max() - r.min()) / (np.interp(t_ref, t, r) * (t[-1] - t[0])))


def box_metrics(series: SweepSeries) -> Metrics:
    scale, unit = (100.0, "%/V") if series.axis == "supply" else (1e6, "ppm/degC")
    value, i_avg, i_min, i_max, x_min, x_max, n = _box(
        series.x[series.valid], series.i_ref[series.valid], scale)
    return Metrics(series.axis, value, unit, i_avg, i_min, i_max, x_min, x_max, n)


# --- corners ------------------------------------------------------------------

@dataclass(frozen=True)
class CornerSpec:
    """Systematic shifts keyed by device-type name.

    ``vt0_shift`` adds to the threshold magnitude (V); ``isq_scale``
    multiplies the specific sheet current.
    """

    name: str
    vt0_shift: Mapping[str, float] = field(default_factory=dict)
    isq_scale: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for k, s in self.isq_scale.items():
            if not s > 0.0:
                raise DomainError(f"corner {self.name}: I_SQ scale for {k!r} must be positive")

    @property
    def is_identity(self) -> bool:
        return (all(v == 0.0 for v in self.vt0_shift.values())
                and all(v == 1.0 for v in self.isq_scale.values()))


TT = CornerSpec("TT")


def map_devices(design, fn):
    """Copy of ``design`` with every transistor replaced by ``fn(role, device)``."""
    v = design.vref
    vref = replace(v, m1=fn("m1", v.m1), m2=fn("m2", v.m2))
    extra = {"m3": design.m3, "m4": design.m4}
    if isinstance(design, PtatReference):
        extra.update(m6=design.m6, m7=design.m7)
    changes = {k: fn(k, d) for k, d in extra.items() if d is not None}
    return replace(design, vref=vref, **changes)


def apply_corner(design, corner: CornerSpec):
    if corner.is_identity:
        return design

    def shift(_role, dev: Device) -> Device:
        p = dev.params
        dv = corner.vt0_shift.get(p.name, 0.0)
        sc = corner.isq_scale.get(p.name, 1.0)
        if dv == 0.0 and sc == 1.0:
            return dev
        return Device(replace(p, v_t0_ref=p.v_t0_ref + dv, i_sq_ref=p.i_sq_ref * sc), dev.geom)

    return map_devices(design, shift)


@dataclass(frozen=True)
class CornerResult:
    corner: str
    i_ref: float
    deviation: float  # relative to the nominal design
    ls: float  # %/V
    tc: float  # ppm/°C


def corner_analysis(design, corners: Sequence[CornerSpec], t: float = T_REF_DEFAULT,
                    vdd: Optional[float] = None,
                    v_range=(0.5, 1.8, 0.05), t_range=(233.15, 358.15, 5.0)) -> Dict[str, CornerResult]:
    """I_REF deviation, LS and TC of ``design`` under each corner.

    I_REF is evaluated at ``t`` and ``vdd`` (default: the design's nominal
    supply); TC sweeps run at the same supply.
    """
    vdd = design.vdd_nominal if vdd is None else vdd
    nominal = reference_output(design, t, vdd).i_ref
    out = {}
    for c in corners:
        d = apply_corner(design, c)
        i_ref = reference_output(d, t, vdd).i_ref
        ls = box_ls(sweep(d, "supply", *v_range, t=t, conditions={"corner": c.name}))
        tc = box_tc(sweep(d, "temperature", *t_range, vdd=vdd, conditions={"corner": c.name}))
        out[c.name] = CornerResult(c.name, i_ref, i_ref / nominal - 1.0, ls, tc)
    return out


# --- Monte Carlo --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    samples: np.ndarray
    mean: float
    sigma: float
    sigma_over_mu: float
    predicted: float  # S_IREF * sigma_VREF
    sigma_vref: float
    seed: int
    scope: str
    standard_error: float  # of sigma_over_mu

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, MonteCarloReport):
            return NotImplemented
        return (np.array_equal(self.samples, other.samples)
                and (self.mean, self.sigma, self.sigma_over_mu, self.predicted, self.sigma_vref,
                     self.seed, self.scope, self.standard_error)
                == (other.mean, other.sigma, other.sigma_over_mu, other.predicted,
                    other.sigma_vref, other.seed, other.scope, other.standard_error))

    __hash__ = None


def _mc_roles(design, scope):
    if scope == "vref":
        return ["m1", "m2"]
    return [k for k in ("m1", "m2", "m4", "m5", "m6", "m7") if k in design.devices()]


def _with_vt_offsets(design, offsets: Mapping[str, float]):
    def shift(role, dev: Device) -> Device:
        dv = offsets.get(role, 0.0)
        if dv == 0.0:
            return dev
        return Device(replace(dev.params, v_t0_ref=dev.params.v_t0_ref + dv), dev.geom)

    return map_devices(design, shift)


def _sample_iref(design, offsets, t, vdd):
    """I_REF of one mismatch sample. SCM and mirror offsets go through the
    full self-cascode solve; 2T offsets through the normal design path."""
    perturbed = _with_vt_offsets(design, {k: offsets[k] for k in ("m1", "m2") if k in offsets})
    if not isinstance(design, PtatReference) or not any(
            k in offsets for k in ("m4", "m5", "m6", "m7")):
        return reference_output(perturbed, t, vdd).i_ref
    v_ref = vref_2t(perturbed.vref, t)
    if vdd is not None:
        i_nom = reference_output(design, t, None).i_ref
        v_ref = vref_2t_supply(perturbed.vref, t, vdd, _buffer_drop(design.m3, i_nom, t))
    n4 = design.m4.params.n if design.m4 is not None else 1.0
    gain = math.exp((offsets.get("m4", 0.0) - offsets.get("m5", 0.0)) / (n4 * thermal_voltage(t)))
    return scm_full_solve(design, v_ref, t, offsets.get("m6", 0.0), offsets.get("m7", 0.0), gain)


def monte_carlo(design, n_samples: int, seed: int, t: float = T_REF_DEFAULT,
                vdd: Optional[float] = None, scope: str = "vref") -> MonteCarloReport:
    """Local V_T0 mismatch by Pelgrom's law, re-solving the design per sample.

    Sample ``i`` draws from its own generator seeded with ``(seed, i)``, so
    any evaluation order gives the same report. ``scope="vref"`` perturbs
    M1/M2 only (the reach of the analytic prediction); ``"all"`` adds the
    mirror and self-cascode devices.
    """
    if scope not in MC_SCOPES:
        raise DomainError(f"Monte-Carlo scope must be one of {MC_SCOPES}, got {scope!r}")
    if n_samples < 2:
        raise DomainError("Monte-Carlo needs at least 2 samples")
    devs = design.devices()
    roles = _mc_roles(design, scope)
    sig = np.array([devs[k].pelgrom_sigma() for k in roles])
    sv = sigma_vref(design.vref if isinstance(design, PtatReference) else design.effective_vref())
    predicted = propagate_ls_and_mismatch(iref_sensitivity(design, t), 0.0, sv)[1]

    samples = np.empty(n_samples)
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        dv = rng.standard_normal(len(roles)) * sig
        try:
            samples[i] = _sample_iref(design, dict(zip(roles, dv)), t, vdd)
        except TwoTError as exc:
            raise NumericError(f"Monte-Carlo sample {i} failed: {exc}") from exc
    samples.flags.writeable = False
    mean = float(np.mean(samples))
    # shifted so identical samples give exactly zero spread
    sigma = float(np.std(samples - samples[0], ddof=1))
    s_mu = sigma / mean
    return MonteCarloReport(samples, mean, sigma, s_mu, predicted, sv, seed, scope,
                            s_mu / math.sqrt(2.0 * (n_samples - 1)))


def require_mismatch_data(design):
    """Raise ConfigurationError unless every transistor has a Pelgrom coefficient."""
    for role, dev in design.devices().items():
        if dev.params.a_vt is None:
            raise ConfigurationError(f"{role} ({dev.params.name}) has no a_vt for mismatch analysis")
