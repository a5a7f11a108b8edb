import logging

import numpy as np
import pytest

import jumpsmooth as js
from jumpsmooth.ancilla import diagonal_instrument

SYS3_ENERGIES = (0.0, 1.0, 2.5)
SYS3_RATES = {(0, 1): 1.0, (0, 2): 0.5, (1, 2): 0.8}

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _quiet_instrument_warning(caplog):
    # random isometries never sum to the identity; the warning is expected
    caplog.set_level(logging.ERROR, logger="jumpsmooth")


@pytest.fixture
def sys3():
    return js.build_system(SYS3_ENERGIES, SYS3_RATES)


@pytest.fixture
def two_level():
    return js.build_system((0.0, 1.0), {(0, 1): 1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def diag_inst():
    return diagonal_instrument([[0.3, 0.6, 0.9], [0.7, 0.4, 0.1]])


@pytest.fixture
def sys3_config(tmp_path):
    import json

    p = tmp_path / "sys3.json"
    rates = [{"m": m, "n": n, "gamma": g} for (m, n), g in SYS3_RATES.items()]
    p.write_text(json.dumps({"energies": list(SYS3_ENERGIES), "rates": rates}))
    return p


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
