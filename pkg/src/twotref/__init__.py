"""Behavioural models, sizing and analysis of 2T-voltage-reference based
current references (nA-range PTAT with a self-cascode load, uA-range CWT
with a resistor load)."""
from .analysis import (
    CornerSpec,
    Metrics,
    MonteCarloReport,
    SweepSeries,
    apply_corner,
    box_ls,
    box_metrics,
    box_tc,
    corner_analysis,
    monte_carlo,
    sweep,
)
from .device_models import Geometry, ResistorParams, TransistorParams
from .errors import (
    ConfigurationError,
    DomainError,
    MetricError,
    NumericError,
    SchemaError,
    SizingError,
    TwoTError,
)
from .reference_circuits import (
    CalibrationConfig,
    CwtReference,
    Device,
    PtatReference,
    TwoTVref,
    cwt_diref_dt,
    cwt_iref,
    cwt_optimal_ratio,
    ptat_iref,
    reference_output,
    sensitivity_ptat,
    solve_scm,
    vref_2t,
)
from .sizing import (
    CwtSizer,
    CwtSizingSpec,
    PtatSizer,
    PtatSizingSpec,
    SizingResult,
    select_calibration_code,
    size_cwt,
    size_ptat,
)
from .techdata import TechDeck, load_design_file, load_tech_deck

__version__ = "0.1.0"

__all__ = [
    "Geometry",
    "ResistorParams",
    "TransistorParams",
    "TechDeck",
    "load_design_file",
    "load_tech_deck",
    "CornerSpec",
    "Metrics",
    "MonteCarloReport",
    "SweepSeries",
    "apply_corner",
    "box_ls",
    "box_metrics",
    "box_tc",
    "corner_analysis",
    "monte_carlo",
    "sweep",
    "ConfigurationError",
    "DomainError",
    "MetricError",
    "NumericError",
    "SchemaError",
    "SizingError",
    "TwoTError",
    "CalibrationConfig",
    "CwtReference",
    "Device",
    "PtatReference",
    "TwoTVref",
    "cwt_diref_dt",
    "cwt_iref",
    "cwt_optimal_ratio",
    "ptat_iref",
    "reference_output",
    "sensitivity_ptat",
    "solve_scm",
    "vref_2t",
    "CwtSizer",
    "CwtSizingSpec",
    "PtatSizer",
    "PtatSizingSpec",
    "SizingResult",
    "select_calibration_code",
    "size_cwt",
    "size_ptat",
]
