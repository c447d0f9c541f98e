"""Command-line front end.

Every subcommand writes only inside ``--out`` (created if missing) and its
files depend only on the deck, the design, the flags and the seed.
Temperatures on the command line are in °C.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

from . import analysis, techdata
from .errors import (
    ConfigurationError,
    DomainError,
    MetricError,
    NumericError,
    SizingError,
    TwoTError,
)
from .reference_circuits import CwtReference
from .sizing import CwtSizingSpec, PtatSizingSpec, select_calibration_code, size_cwt, size_ptat
from .units import celsius_to_kelvin

EXIT_OK, EXIT_CONFIG, EXIT_SIZING, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5

DEFAULTS = {"tmin": -40.0, "tmax": 85.0, "tstep": 5.0, "vmin": 0.5, "vmax": 1.8, "vstep": 0.05,
            "samples": 1000, "seed": 0, "t": 25.0}


@dataclass
class CommandConfig:
    """Resolved options: flags override the design file, which overrides
    the defaults. Temperatures here are kelvin."""

    command: str
    deck: Optional[str]
    design: Optional[str]
    out: Optional[str]
    tmin: float
    tmax: float
    tstep: float
    vmin: float
    vmax: float
    vstep: float
    t: float
    vdd: Optional[float]
    samples: int
    seed: int
    scope: str
    axis: str
    corners: List[str] = field(default_factory=list)

    def validate(self):
        if not (self.tmin < self.tmax and self.tstep > 0.0):
            raise ConfigurationError("need tmin < tmax and tstep > 0")
        if not (self.vmin < self.vmax and self.vstep > 0.0):
            raise ConfigurationError("need vmin < vmax and vstep > 0")
        if self.tmin <= 0.0:
            raise ConfigurationError("tmin is below absolute zero")
        if self.samples < 2:
            raise ConfigurationError("need at least 2 Monte-Carlo samples")
        if self.vdd is not None and not self.vdd > 0.0:
            raise ConfigurationError("vdd must be positive")
        if self.scope not in analysis.MC_SCOPES:
            raise ConfigurationError(f"scope must be one of {analysis.MC_SCOPES}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twotref", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, design_required):
        p.add_argument("--deck", help="tech deck (YAML); default: shipped deck")
        p.add_argument("--design", required=design_required, help="design file (YAML)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--corner", action="append", default=None,
                       help="process corner name from the deck (repeatable)")
        p.add_argument("--vdd", type=float, help="supply for temperature runs [V]")
        p.add_argument("--t", type=float, dest="t", help="temperature for supply runs [degC]")
        for name, unit in (("tmin", "degC"), ("tmax", "degC"), ("tstep", "degC"),
                           ("vmin", "V"), ("vmax", "V"), ("vstep", "V")):
            p.add_argument(f"--{name}", type=float, help=f"[{unit}]")
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--scope", choices=analysis.MC_SCOPES)

    for name, required, text in (
            ("size-ptat", False, "size the nA PTAT reference"),
            ("size-cwt", False, "size the uA CWT reference"),
            ("sweep", True, "temperature or supply sweep with box metrics"),
            ("montecarlo", True, "local-mismatch Monte Carlo"),
            ("corners", True, "I_REF, LS and TC per process corner"),
            ("calibrate", True, "box TC of every calibration code")):
        p = sub.add_parser(name, help=text)
        common(p, required)
        if name == "sweep":
            p.add_argument("--axis", choices=analysis.AXES, default="temperature")
    return ap


def resolve_config(args, design_analysis) -> CommandConfig:
    def pick(name):
        v = getattr(args, name, None)
        if v is not None:
            return v
        return design_analysis.get(name)

    def temp(name):
        v = getattr(args, name, None)
        if v is not None:
            return celsius_to_kelvin(v) if name != "tstep" else float(v)
        if name in design_analysis:
            return design_analysis[name]
        return celsius_to_kelvin(DEFAULTS[name]) if name != "tstep" else DEFAULTS[name]

    def val(name):
        v = pick(name)
        return DEFAULTS[name] if v is None else v

    corners = args.corner if args.corner is not None else design_analysis.get("corners", [])
    cfg = CommandConfig(args.command, args.deck, args.design, args.out,
                        temp("tmin"), temp("tmax"), temp("tstep"),
                        val("vmin"), val("vmax"), val("vstep"), temp("t"), pick("vdd"),
                        val("samples"), val("seed"), pick("scope") or "vref",
                        getattr(args, "axis", "temperature"), list(corners))
    cfg.validate()
    return cfg


def _outpath(cfg: CommandConfig, name: str) -> Optional[str]:
    if cfg.out is None:
        return None
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _print_sizing(res, deck):
    p = res.predictions
    print(f"{res.kind.upper()} sizing")
    for role, (name, g) in sorted(res.geometries.items()):
        seg = f"{g.series}x{g.l:g}" if g.series > 1 else f"{g.l:g}"
        print(f"  {role}: {name:9s} W = {g.mult}x{g.w:g} um  L = {seg} um")
    if res.resistor is not None:
        label = deck.resistors[res.resistor].label
        print(f"  R : {res.resistor} ({label})  {res.squares:.2f} squares")
    print(f"  V_REF   = {p['v_ref'] * 1e3:.3f} mV")
    print(f"  I_REF   = {p['i_ref']:.4g} A")
    print(f"  S_IREF  = {p['s_iref'] / 1e3 * 100:.3f} %/mV")
    print(f"  LS      = {p['ls'] * 100:.3f} %/V (V_REF: {p['vref_ls'] * 1e3:.3f} mV/V)")
    if "sigma_over_mu" in p:
        print(f"  sigma/mu= {p['sigma_over_mu'] * 100:.3f} % (sigma_VREF = {p['sigma_vref'] * 1e3:.3f} mV)")
    print(f"  VDD,min = {p['vdd_min']:.3f} V")


def _load(cfg: CommandConfig):
    deck = techdata.load_tech_deck(cfg.deck)
    df = techdata.load_design_file(cfg.design) if cfg.design else None
    return deck, df


def _design(cfg, deck, df):
    design, _ = techdata.build_design(df, deck)
    for name in cfg.corners:
        design = analysis.apply_corner(design, deck.corner(name))
    return design


def cmd_size(cfg: CommandConfig, kind: str) -> int:
    deck, df = _load(cfg)
    if df is None:
        spec = PtatSizingSpec() if kind == "ptat" else CwtSizingSpec()
    elif df.kind != kind or df.sizing is None:
        raise ConfigurationError(f"design file must hold a '{kind}' sizing section")
    else:
        spec = df.sizing
    res = size_ptat(spec, deck) if kind == "ptat" else size_cwt(spec, deck)
    _print_sizing(res, deck)
    path = _outpath(cfg, "sizing.json")
    if path:
        techdata.write_json(path, techdata.sizing_to_dict(res))
    return EXIT_OK


def cmd_sweep(cfg: CommandConfig) -> int:
    deck, df = _load(cfg)
    design = _design(cfg, deck, df)
    cond = {"corner": "+".join(cfg.corners) or "nominal"}
    if cfg.axis == "temperature":
        vdd = design.vdd_nominal if cfg.vdd is None else cfg.vdd
        s = analysis.sweep(design, "temperature", cfg.tmin, cfg.tmax, cfg.tstep, vdd=vdd,
                           conditions=cond)
    else:
        s = analysis.sweep(design, "supply", cfg.vmin, cfg.vmax, cfg.vstep, t=cfg.t,
                           conditions=cond)
    m = analysis.box_metrics(s)
    print(f"{cfg.axis} sweep: {len(s)} points, {int(s.valid.sum())} valid")
    print(f"  {'LS' if cfg.axis == 'supply' else 'TC'} = {m.value:.6g} {m.unit}"
          f"  (I_avg = {m.i_avg:.6g} A)")
    path = _outpath(cfg, "sweep.csv")
    if path:
        techdata.save_series(path, s)
        techdata.save_metrics(_outpath(cfg, "metrics.json"), m)
    return EXIT_OK


def cmd_montecarlo(cfg: CommandConfig) -> int:
    deck, df = _load(cfg)
    design = _design(cfg, deck, df)
    analysis.require_mismatch_data(design)
    r = analysis.monte_carlo(design, cfg.samples, cfg.seed, t=cfg.t, vdd=cfg.vdd, scope=cfg.scope)
    print(f"Monte Carlo ({r.n_samples} samples, seed {r.seed}, scope {r.scope})")
    print(f"  mean     = {r.mean:.6g} A")
    print(f"  sigma/mu = {r.sigma_over_mu * 100:.4f} % +- {r.standard_error * 100:.4f} %")
    print(f"  predicted (S_IREF * sigma_VREF) = {r.predicted * 100:.4f} %")
    path = _outpath(cfg, "montecarlo.json")
    if path:
        techdata.save_report(path, r)
    return EXIT_OK


def cmd_corners(cfg: CommandConfig) -> int:
    deck, df = _load(cfg)
    design, _ = techdata.build_design(df, deck)
    names = cfg.corners or sorted(deck.corners)
    specs = [deck.corner(n) for n in names]
    res = analysis.corner_analysis(design, specs, t=cfg.t, vdd=cfg.vdd,
                                   v_range=(cfg.vmin, cfg.vmax, cfg.vstep),
                                   t_range=(cfg.tmin, cfg.tmax, cfg.tstep))
    print(f"{'corner':8s} {'I_REF [A]':>12s} {'dev [%]':>9s} {'LS [%/V]':>9s} {'TC [ppm/C]':>11s}")
    for n in names:
        c = res[n]
        print(f"{n:8s} {c.i_ref:12.5g} {c.deviation * 100:9.2f} {c.ls:9.3f} {c.tc:11.1f}")
    path = _outpath(cfg, "corners.json")
    if path:
        record = {"schema_version": techdata.SCHEMA_VERSION, "type": "corners",
                  "t": cfg.t, "vdd": cfg.vdd if cfg.vdd is not None else design.vdd_nominal,
                  "supply_range": [cfg.vmin, cfg.vmax, cfg.vstep],
                  "temperature_range": [cfg.tmin, cfg.tmax, cfg.tstep],
                  "corners": {n: {"i_ref": c.i_ref, "deviation": c.deviation, "ls": c.ls, "tc": c.tc}
                              for n, c in res.items()}}
        techdata.write_json(path, record)
    return EXIT_OK


def cmd_calibrate(cfg: CommandConfig) -> int:
    deck, df = _load(cfg)
    design = _design(cfg, deck, df)
    if not isinstance(design, CwtReference) or design.calibration is None:
        raise ConfigurationError("calibrate needs a CWT design with a calibration section")
    code, tcs = select_calibration_code(design, cfg.tmin, cfg.tmax, cfg.tstep, vdd=cfg.vdd)
    print(f"{'code':>4s} {'W2/W1':>7s} {'TC [ppm/C]':>11s}")
    rows = []
    for c, tc in enumerate(tcs):
        ratio = design.calibration.ratio(c)
        rows.append((c, ratio, float(tc)))
        mark = "  <- selected" if c == code else ""
        print(f"{c:4d} {ratio:7.4f} {tc:11.2f}{mark}")
    path = _outpath(cfg, "calibration.csv")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# schema_version: {techdata.SCHEMA_VERSION}\n")
            fh.write(f"# selected_code: {code}\n")
            fh.write(f"# temperature_range_K: {cfg.tmin!r},{cfg.tmax!r},{cfg.tstep!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("code", "ratio", "tc_ppm_per_degC"))
            for c, ratio, tc in rows:
                w.writerow((c, repr(ratio), repr(tc)))
    return EXIT_OK


COMMANDS = {
    "size-ptat": lambda c: cmd_size(c, "ptat"),
    "size-cwt": lambda c: cmd_size(c, "cwt"),
    "sweep": cmd_sweep,
    "montecarlo": cmd_montecarlo,
    "corners": cmd_corners,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                design_analysis = {}
                if args.design:
                    design_analysis = dict(techdata.load_design_file(args.design).analysis)
                cfg = resolve_config(args, design_analysis)
                return COMMANDS[cfg.command](cfg)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
    except ConfigurationError as exc:
        code, exc_ = EXIT_CONFIG, exc
    except SizingError as exc:
        code, exc_ = EXIT_SIZING, exc
    except (NumericError, DomainError, MetricError) as exc:
        code, exc_ = EXIT_NUMERIC, exc
    except OSError as exc:
        code, exc_ = EXIT_IO, exc
    except TwoTError as exc:
        code, exc_ = EXIT_NUMERIC, exc
    print(f"error: {exc_}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
