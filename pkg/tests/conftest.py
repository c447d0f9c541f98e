import warnings

import pytest

from twotref.reference_circuits import CalibrationConfig
from twotref.sizing import CwtSizingSpec, PtatSizingSpec, size_cwt, size_ptat
from twotref.techdata import load_tech_deck

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def deck():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return load_tech_deck()


@pytest.fixture(scope="session")
def ptat_sized(deck):
    return size_ptat(PtatSizingSpec(), deck)


@pytest.fixture(scope="session")
def cwt_sized(deck):
    return size_cwt(CwtSizingSpec(calibration=CalibrationConfig()), deck)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
