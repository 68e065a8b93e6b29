import numpy as np
import pytest

from dualband.channel import BandConfig
from dualband.scene import ScenarioConfig, generate_trace
from dualband.simulator import TrainingSetup, gamma_sweep, train_predictor

_CRITERIA: list[tuple[str, bool, str]] = []

GAMMA_GRID = (0.0, 0.5, 1.0, 1.5)
GAMMA_SEEDS = range(10)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def criterion():
    """Record one pass/fail line, then assert it."""

    def check(name: str, ok: bool, detail: str = ""):
        _CRITERIA.append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return check


@pytest.fixture(scope="session")
def bands():
    return BandConfig.mmwave(), BandConfig.sub6()


@pytest.fixture(scope="session")
def default_trace():
    return generate_trace(ScenarioConfig(seed=7))


@pytest.fixture(scope="session")
def trained():
    """Logistic predictor on the default training scenario (seeded)."""
    return train_predictor(TrainingSetup())


@pytest.fixture(scope="session")
def gamma_rows():
    return gamma_sweep(GAMMA_GRID, TrainingSetup(), seeds=GAMMA_SEEDS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
