import numpy as np
import pytest

from proxyselect.data import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_data_ref():
    return {"kind": "synthetic", "classes": 4, "per_class": 60, "dims": 6, "overlap": 0.8,
            "label_noise": 0.05, "seed": 3}


@pytest.fixture(scope="session")
def small_dataset(small_data_ref):
    ref = dict(small_data_ref)
    ref.pop("kind")
    return generate_synthetic(**ref)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
