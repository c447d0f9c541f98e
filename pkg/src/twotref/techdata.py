"""Tech decks, design files and result files.

Decks and design files are YAML with a ``schema_version`` and an explicit
unit on every dimensional value. Sweep series are written as CSV with ``#``
metadata lines; metrics, Monte-Carlo reports and sizing results as JSON with
sorted keys. Floats are rendered with ``repr`` so every file round-trips
bit-exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Dict, List, Mapping, Optional

import numpy as np
import yaml

from .analysis import CornerSpec, Metrics, MonteCarloReport, SweepSeries
from .device_models import Geometry, ResistorParams, TransistorParams
from .errors import ConfigurationError, DomainError, SchemaError
from .reference_circuits import (
    CalibrationConfig,
    CwtReference,
    Device,
    PtatReference,
    TwoTVref,
)
from .sizing import CwtSizingSpec, PtatSizingSpec, SizingResult
from .units import parse_quantity

SCHEMA_VERSION = 1
SERIES_COLUMNS = ("x", "i_ref", "v_ref", "power", "valid")
DEFAULT_DECK = "xfab180_like.yaml"


class PlaceholderWarning(UserWarning):
    """Raised (as a warning) when a deck relies on non-characterized values."""


# --- YAML with line numbers ---------------------------------------------------

def _line_map(text: str) -> Dict[tuple, int]:
    """Dotted key path -> 1-based line of every mapping key in ``text``."""
    out = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    walk(yaml.compose(text, Loader=yaml.SafeLoader), ())
    return out


class _Doc:
    """Parsed YAML plus the bookkeeping for located schema errors."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.data = yaml.safe_load(text)
            self.lines = _line_map(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{source}:{mark.line + 1}" if mark else source
            raise SchemaError(f"YAML parse error: {exc}", where) from exc
        if not isinstance(self.data, dict):
            raise SchemaError("top level must be a mapping", source)

    def where(self, path) -> str:
        path = tuple(path)
        dotted = ".".join(str(p) for p in path)
        for k in range(len(path), 0, -1):
            if path[:k] in self.lines:
                return f"{self.source}:{self.lines[path[:k]]} ({dotted})"
        return f"{self.source} ({dotted})" if dotted else self.source

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            raise SchemaError("expected a mapping", self.where(path))
        for k in value:
            if k not in allowed:
                raise SchemaError(f"unknown field {k!r}", self.where(path + (k,)))
        for k in required:
            if k not in value:
                raise SchemaError(f"missing required field {k!r}", self.where(path))
        return value

    def qty(self, m, path, key, dim, default=None):
        if key not in m:
            if default is None:
                raise SchemaError(f"missing required field {key!r}", self.where(path))
            return default
        return parse_quantity(m[key], dim, self.where(path + (key,)))

    def num(self, m, path, key, default=None, kind=float):
        if key not in m:
            if default is None:
                raise SchemaError(f"missing required field {key!r}", self.where(path))
            return default
        v = m[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"expected a plain number, got {v!r}", self.where(path + (key,)))
        if kind is int and v != int(v):
            raise SchemaError(f"expected an integer, got {v!r}", self.where(path + (key,)))
        return kind(v)

    def text(self, m, path, key, default=None):
        if key not in m:
            if default is None:
                raise SchemaError(f"missing required field {key!r}", self.where(path))
            return default
        if not isinstance(m[key], str):
            raise SchemaError(f"expected a string, got {m[key]!r}", self.where(path + (key,)))
        return m[key]

    def check_version(self):
        v = self.data.get("schema_version")
        if v is None:
            raise SchemaError("missing schema_version", self.source)
        if v != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {v!r} (supported: {SCHEMA_VERSION})",
                              self.where(("schema_version",)))


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise ConfigurationError(f"file not found: {path}") from exc


def _built(doc: _Doc, path, factory, *args, **kwargs):
    # run a constructor and pin any invariant violation to the file location
    try:
        return factory(*args, **kwargs)
    except DomainError as exc:
        raise SchemaError(str(exc), doc.where(path)) from exc


# --- tech deck ------------------------------------------------------------------

@dataclass(frozen=True)
class TechDeck:
    name: str
    transistors: Mapping[str, TransistorParams]
    resistors: Mapping[str, ResistorParams]
    corners: Mapping[str, CornerSpec] = field(default_factory=dict)
    placeholders: tuple = ()  # dotted parameter paths not backed by characterization
    source: str = ""

    def corner(self, name: str) -> CornerSpec:
        try:
            return self.corners[name]
        except KeyError:
            raise ConfigurationError(
                f"corner {name!r} not in deck (have: {', '.join(sorted(self.corners))})") from None


_TRANSISTOR_FIELDS = ("polarity", "n", "i_sq", "v_t0", "alpha_vt0", "m_mob", "a_vt", "v_ea",
                      "placeholder")
_RESISTOR_FIELDS = ("label", "sheet", "tcr1", "tcr2", "placeholder")


def _placeholder_list(doc, m, path, known):
    items = m.get("placeholder", [])
    if not isinstance(items, list) or not all(isinstance(s, str) for s in items):
        raise SchemaError("placeholder must be a list of field names", doc.where(path + ("placeholder",)))
    for s in items:
        if s not in known:
            raise SchemaError(f"placeholder names unknown field {s!r}", doc.where(path + ("placeholder",)))
    return [".".join(path[1:] + (s,)) for s in items]


def _parse_transistor(doc, name, m, t_ref):
    path = ("transistors", name)
    doc.mapping(m, path, _TRANSISTOR_FIELDS, ("polarity", "n", "i_sq", "v_t0"))
    pol = doc.text(m, path, "polarity")
    if pol not in ("n", "p"):
        raise SchemaError(f"polarity must be 'n' or 'p', got {pol!r}", doc.where(path + ("polarity",)))
    vt = doc.qty(m, path, "v_t0", "voltage")
    # thresholds are written signed; a sign that contradicts the polarity is
    # almost always a transcription error
    if (pol == "n" and vt < 0.0) or (pol == "p" and vt > 0.0):
        raise SchemaError(f"v_t0 sign contradicts polarity {pol!r}", doc.where(path + ("v_t0",)))
    kwargs = dict(name=name, polarity=pol, n=doc.num(m, path, "n"),
                  i_sq_ref=doc.qty(m, path, "i_sq", "current"), v_t0_ref=abs(vt),
                  alpha_vt0=doc.qty(m, path, "alpha_vt0", "tempco_v", 0.0),
                  m_mob=doc.num(m, path, "m_mob", 1.5),
                  v_ea_per_um=doc.qty(m, path, "v_ea", "early", math.inf),
                  t_ref=t_ref)
    if "a_vt" in m:
        kwargs["a_vt"] = doc.qty(m, path, "a_vt", "pelgrom")
    params = _built(doc, path, TransistorParams, **kwargs)
    return params, _placeholder_list(doc, m, path, _TRANSISTOR_FIELDS[1:-1])


def _parse_resistor(doc, name, m, t_ref):
    path = ("resistors", name)
    doc.mapping(m, path, _RESISTOR_FIELDS, ("sheet", "tcr1"))
    params = _built(doc, path, ResistorParams, name=name,
                    sheet_resistance=doc.qty(m, path, "sheet", "sheet"),
                    tcr1=doc.qty(m, path, "tcr1", "tcr1"),
                    tcr2=doc.qty(m, path, "tcr2", "tcr2", 0.0),
                    t_ref=t_ref, label=doc.text(m, path, "label", ""))
    return params, _placeholder_list(doc, m, path, _RESISTOR_FIELDS[1:-1])


def _parse_corner(doc, name, m, transistors):
    path = ("corners", name)
    doc.mapping(m, path, ("shifts", "placeholder"), ("shifts",))
    shifts = doc.mapping(m["shifts"] or {}, path + ("shifts",), tuple(transistors))
    vt, isq = {}, {}
    for dev, s in shifts.items():
        p = path + ("shifts", dev)
        doc.mapping(s, p, ("vt0_shift", "isq_scale"))
        vt[dev] = doc.qty(s, p, "vt0_shift", "voltage", 0.0)
        isq[dev] = doc.num(s, p, "isq_scale", 1.0)
    flag = m.get("placeholder", False)
    if not isinstance(flag, bool):
        raise SchemaError("placeholder must be true or false", doc.where(path + ("placeholder",)))
    return _built(doc, path, CornerSpec, name, vt, isq), flag


def parse_tech_deck(text: str, source: str = "<deck>") -> TechDeck:
    doc = _Doc(text, source)
    doc.check_version()
    top = doc.mapping(doc.data, (), ("schema_version", "name", "t_ref", "transistors",
                                     "resistors", "corners"), ("transistors",))
    t_ref = doc.qty(top, (), "t_ref", "temperature", 298.15)
    placeholders: List[str] = []
    transistors, resistors, corners = {}, {}, {}
    sections = {k: top.get(k) or {} for k in ("transistors", "resistors", "corners")}
    for k, v in sections.items():
        if not isinstance(v, dict):
            raise SchemaError("expected a mapping", doc.where((k,)))
    for name, m in sections["transistors"].items():
        transistors[name], ph = _parse_transistor(doc, name, m, t_ref)
        placeholders += [f"transistors.{p}" for p in ph]
    for name, m in sections["resistors"].items():
        resistors[name], ph = _parse_resistor(doc, name, m, t_ref)
        placeholders += [f"resistors.{p}" for p in ph]
    for name, m in sections["corners"].items():
        corners[name], flag = _parse_corner(doc, name, m, transistors)
        if flag:
            placeholders.append(f"corners.{name}")
    if placeholders:
        warnings.warn(f"{source}: placeholder (non-characterized) parameters: "
                      + ", ".join(placeholders), PlaceholderWarning, stacklevel=3)
    return TechDeck(top.get("name", ""), transistors, resistors, corners,
                    tuple(placeholders), source)


def load_tech_deck(path=None) -> TechDeck:
    """Load and validate a deck; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("twotref").joinpath("data", DEFAULT_DECK).read_text(encoding="utf-8")
        return parse_tech_deck(text, DEFAULT_DECK)
    return parse_tech_deck(_read_text(path), os.fspath(path))


# --- design files -----------------------------------------------------------------

@dataclass(frozen=True)
class DesignFile:
    """``kind`` is ``"ptat"`` or ``"cwt"``; exactly one of ``sizing`` and
    ``devices`` is set. ``analysis`` holds SI-converted defaults for the
    analysis subcommands."""

    kind: str
    sizing: Optional[object] = None
    devices: Optional[Mapping] = None
    analysis: Mapping = field(default_factory=dict)


_PTAT_SIZING = {
    "target_iref": ("qty", "current"), "s2_over_s1": ("num", float), "alpha": ("num", float),
    "n_mirror": ("num", int), "m": ("num", int), "vref_device": ("text",),
    "scm_device": ("text",), "buffer_device": ("text",), "mirror_device": ("text",),
    "unit_w": ("qty", "length"), "unit_l": ("qty", "length"), "scm_segment_l": ("qty", "length"),
    "scm_series": ("num", int), "buffer_l": ("qty", "length"), "buffer_if": ("num", float),
    "mirror_segment_l": ("qty", "length"), "mirror_series": ("num", int),
    "mirror_if": ("num", float), "target_sensitivity": ("num", float),
    "t_ref": ("qty", "temperature"), "vdd": ("qty", "voltage"), "min_width": ("qty", "length"),
}
_CWT_SIZING = {
    "target_iref": ("qty", "current"), "m1_device": ("text",), "m2_device": ("text",),
    "length": ("qty", "length"), "w2": ("qty", "length"), "mult": ("num", int),
    "resistor": ("text",), "buffer_device": ("text",), "mirror_device": ("text",),
    "mirror_w": ("qty", "length"), "mirror_l": ("qty", "length"), "mirror_mult": ("num", int),
    "calibration": ("calibration",), "t_ref": ("qty", "temperature"), "vdd": ("qty", "voltage"),
    "min_width": ("qty", "length"),
}
_ANALYSIS = {
    "tmin": ("qty", "temperature"), "tmax": ("qty", "temperature"), "tstep": ("qty", "tstep"),
    "vmin": ("qty", "voltage"), "vmax": ("qty", "voltage"), "vstep": ("qty", "voltage"),
    "vdd": ("qty", "voltage"), "t": ("qty", "temperature"), "samples": ("num", int),
    "seed": ("num", int), "corners": ("list",), "scope": ("text",),
}


def _parse_fields(doc, m, path, table):
    doc.mapping(m, path, tuple(table))
    out = {}
    for key, how in table.items():
        if key not in m:
            continue
        if how[0] == "qty" and how[1] == "tstep":
            # temperature differences: K and degC steps are the same size
            v = m[key]
            if isinstance(v, str) and v.strip().endswith(("degC", "K")):
                out[key] = parse_quantity(v.replace("degC", "K"), "temperature", doc.where(path + (key,)))
            else:
                raise SchemaError("temperature step needs a K or degC unit", doc.where(path + (key,)))
        elif how[0] == "qty":
            out[key] = doc.qty(m, path, key, how[1])
        elif how[0] == "num":
            out[key] = doc.num(m, path, key, kind=how[1])
        elif how[0] == "text":
            out[key] = doc.text(m, path, key)
        elif how[0] == "list":
            if not isinstance(m[key], list) or not all(isinstance(s, str) for s in m[key]):
                raise SchemaError("expected a list of names", doc.where(path + (key,)))
            out[key] = list(m[key])
        elif how[0] == "calibration":
            c = doc.mapping(m[key], path + (key,), ("bits", "ratio_min", "ratio_max"))
            out[key] = _built(doc, path + (key,), CalibrationConfig,
                              bits=doc.num(c, path + (key,), "bits", 4, int),
                              ratio_min=doc.num(c, path + (key,), "ratio_min", 0.37),
                              ratio_max=doc.num(c, path + (key,), "ratio_max", 0.83))
    return out


_DEVICE_FIELDS = ("type", "w", "l", "mult", "series")


def _parse_devices(doc, kind, m):
    path = ("devices",)
    roles = ("m1", "m2", "m3", "m4") + (("m6", "m7") if kind == "ptat" else ())
    extra = ("alpha", "n_mirror") if kind == "ptat" else ("resistor", "squares", "calibration", "code")
    doc.mapping(m, path, roles + extra + ("vdd",), ("m1", "m2") + (("m6", "m7", "alpha") if kind == "ptat"
                                                                    else ("resistor", "squares")))
    out = {}
    for role in roles:
        if role not in m:
            continue
        p = path + (role,)
        d = doc.mapping(m[role], p, _DEVICE_FIELDS, ("type", "w", "l"))
        out[role] = (doc.text(d, p, "type"),
                     _built(doc, p, Geometry, doc.qty(d, p, "w", "length"), doc.qty(d, p, "l", "length"),
                            doc.num(d, p, "mult", 1, int), doc.num(d, p, "series", 1, int)))
    if kind == "ptat":
        out["alpha"] = doc.num(m, path, "alpha")
        out["n_mirror"] = doc.num(m, path, "n_mirror", 1, int)
    else:
        out["resistor"] = doc.text(m, path, "resistor")
        out["squares"] = doc.num(m, path, "squares")
        if "calibration" in m:
            out.update(_parse_fields(doc, {"calibration": m["calibration"]}, path,
                                     {"calibration": ("calibration",)}))
        if "code" in m:
            out["code"] = doc.num(m, path, "code", kind=int)
    if "vdd" in m:
        out["vdd"] = doc.qty(m, path, "vdd", "voltage")
    return out


def parse_design_file(text: str, source: str = "<design>") -> DesignFile:
    doc = _Doc(text, source)
    doc.check_version()
    top = doc.mapping(doc.data, (), ("schema_version", "kind", "sizing", "devices", "analysis"),
                      ("kind",))
    kind = doc.text(top, (), "kind")
    if kind not in ("ptat", "cwt"):
        raise SchemaError(f"kind must be 'ptat' or 'cwt', got {kind!r}", doc.where(("kind",)))
    if ("sizing" in top) == ("devices" in top):
        raise SchemaError("give exactly one of 'sizing' and 'devices'", source)
    analysis = _parse_fields(doc, top.get("analysis") or {}, ("analysis",), _ANALYSIS)
    if "sizing" in top:
        table, cls = (_PTAT_SIZING, PtatSizingSpec) if kind == "ptat" else (_CWT_SIZING, CwtSizingSpec)
        fields = _parse_fields(doc, top["sizing"] or {}, ("sizing",), table)
        return DesignFile(kind, sizing=_built(doc, ("sizing",), cls, **fields), analysis=analysis)
    return DesignFile(kind, devices=_parse_devices(doc, kind, top["devices"]), analysis=analysis)


def load_design_file(path) -> DesignFile:
    return parse_design_file(_read_text(path), os.fspath(path))


def build_design(df: DesignFile, deck: TechDeck):
    """Return ``(design, sizing_result_or_None)`` for a design file."""
    from .sizing import size_cwt, size_ptat

    if df.sizing is not None:
        res = size_ptat(df.sizing, deck) if df.kind == "ptat" else size_cwt(df.sizing, deck)
        return res.design, res
    d = df.devices

    def dev(role):
        if role not in d:
            return None
        name, geom = d[role]
        if name not in deck.transistors:
            raise ConfigurationError(f"design uses device type {name!r} missing from the deck")
        return Device(deck.transistors[name], geom)

    vref = TwoTVref(dev("m1"), dev("m2"))
    vdd = d.get("vdd", 1.2)
    if df.kind == "ptat":
        return PtatReference(vref, dev("m6"), dev("m7"), d["alpha"], d["n_mirror"],
                             m3=dev("m3"), m4=dev("m4"), vdd_nominal=vdd), None
    if d["resistor"] not in deck.resistors:
        raise ConfigurationError(f"design uses resistor {d['resistor']!r} missing from the deck")
    try:
        design = CwtReference(vref, deck.resistors[d["resistor"]], d["squares"],
                              calibration=d.get("calibration"), code=d.get("code"),
                              m3=dev("m3"), m4=dev("m4"), vdd_nominal=vdd)
    except DomainError as exc:
        raise ConfigurationError(str(exc)) from exc
    return design, None


# --- results ----------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def series_to_csv(series: SweepSeries) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write(f"# axis: {series.axis}\n")
    buf.write(f"# x_unit: {'K' if series.axis == 'temperature' else 'V'}\n")
    buf.write(f"# design_id: {series.design_id}\n")
    buf.write(f"# conditions: {json.dumps(dict(series.conditions), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for x, i, v, p, ok in zip(series.x, series.i_ref, series.v_ref, series.power, series.valid):
        w.writerow([_fmt(x), _fmt(i), _fmt(v), _fmt(p), int(ok)])
    return buf.getvalue()


def series_from_csv(text: str, source: str = "<series>") -> SweepSeries:
    meta, rows = {}, []
    lines = text.splitlines()
    body_start = 0
    for k, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = k
            break
        key, _, value = line[1:].partition(":")
        meta[key.strip()] = value.strip()
    else:
        body_start = len(lines)
    if meta.get("schema_version") != str(SCHEMA_VERSION):
        raise SchemaError("missing or unsupported schema_version", f"{source}:1")
    reader = csv.reader(lines[body_start:])
    header = next(reader, None)
    if tuple(header or ()) != SERIES_COLUMNS:
        raise SchemaError(f"columns must be {','.join(SERIES_COLUMNS)}", f"{source}:{body_start + 1}")
    for k, row in enumerate(reader, start=body_start + 2):
        if len(row) != len(SERIES_COLUMNS):
            raise SchemaError(f"expected {len(SERIES_COLUMNS)} columns", f"{source}:{k}")
        try:
            rows.append([float(c) for c in row[:4]] + [row[4] == "1"])
        except ValueError as exc:
            raise SchemaError(str(exc), f"{source}:{k}") from exc
    cols = list(zip(*rows)) if rows else [()] * 5
    try:
        conditions = json.loads(meta.get("conditions", "{}"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"bad conditions line: {exc}", source) from exc
    return SweepSeries(meta.get("axis", ""), np.array(cols[0], dtype=float),
                       np.array(cols[1], dtype=float), np.array(cols[2], dtype=float),
                       np.array(cols[3], dtype=float), np.array(cols[4], dtype=bool),
                       design_id=meta.get("design_id", ""), conditions=conditions)


def metrics_to_dict(m: Metrics) -> dict:
    return {"schema_version": SCHEMA_VERSION, "type": "metrics", **asdict(m)}


def metrics_from_dict(d: Mapping) -> Metrics:
    d = dict(d)
    if d.pop("schema_version", None) != SCHEMA_VERSION or d.pop("type", None) != "metrics":
        raise SchemaError("not a metrics record of a supported schema version")
    return Metrics(**d)


def report_to_dict(r: MonteCarloReport) -> dict:
    return {"schema_version": SCHEMA_VERSION, "type": "montecarlo", "n_samples": r.n_samples,
            "mean": r.mean, "sigma": r.sigma, "sigma_over_mu": r.sigma_over_mu,
            "predicted": r.predicted, "sigma_vref": r.sigma_vref, "seed": r.seed,
            "scope": r.scope, "standard_error": r.standard_error,
            "samples": [float(s) for s in r.samples]}


def report_from_dict(d: Mapping) -> MonteCarloReport:
    if d.get("schema_version") != SCHEMA_VERSION or d.get("type") != "montecarlo":
        raise SchemaError("not a Monte-Carlo record of a supported schema version")
    samples = np.array(d["samples"], dtype=float)
    samples.flags.writeable = False
    return MonteCarloReport(samples, d["mean"], d["sigma"], d["sigma_over_mu"], d["predicted"],
                            d["sigma_vref"], d["seed"], d["scope"], d["standard_error"])


def sizing_to_dict(r: SizingResult) -> dict:
    geoms = {role: {"type": name, "w_um": g.w, "l_um": g.l, "mult": g.mult, "series": g.series}
             for role, (name, g) in r.geometries.items()}
    out = {"schema_version": SCHEMA_VERSION, "type": "sizing", "kind": r.kind,
           "geometries": geoms, "predictions": dict(r.predictions)}
    if r.resistor is not None:
        out["resistor"] = {"type": r.resistor, "squares": r.squares}
    design = r.design
    if isinstance(design, PtatReference):
        out["alpha"] = design.alpha
        out["n_mirror"] = design.n_mirror
    return out


def write_json(path, record: Mapping) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_series(path, series: SweepSeries) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(series_to_csv(series))


def load_series(path) -> SweepSeries:
    with open(path, encoding="utf-8") as fh:
        return series_from_csv(fh.read(), os.fspath(path))


def save_metrics(path, m: Metrics) -> None:
    write_json(path, metrics_to_dict(m))


def load_metrics(path) -> Metrics:
    return metrics_from_dict(read_json(path))


def save_report(path, r: MonteCarloReport) -> None:
    write_json(path, report_to_dict(r))


def load_report(path) -> MonteCarloReport:
    return report_from_dict(read_json(path))
