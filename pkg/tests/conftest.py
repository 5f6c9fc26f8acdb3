import numpy as np
import pytest

from fdhap.model import PathLossProfile, SystemParams


@pytest.fixture
def small_params():
    return SystemParams(n_tx=4, n_rx=6, k_dl=2, k_ul=2, p_ap=10.0, tau=6, alpha=0.5)


@pytest.fixture
def unit_losses(small_params):
    return PathLossProfile.uniform(small_params)


def cplx(gen, *shape):
    return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
