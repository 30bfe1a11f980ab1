import numpy as np
import pytest

from biosketch.features import BitChannelModel, synth_population


def clmul_mod(a: int, b: int, poly: int = 0x11D) -> int:
    """Bitwise carry-less product reduced modulo ``poly``; table-free oracle."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a & 0x100:
            a ^= poly
    return r


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_pop():
    return synth_population(8, 1024, BitChannelModel.uniform(1024, 0.05, 0.5), seed=7, samples_per_subject=4)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
