import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from qdent.model import eigenbasis, reference_params  # noqa: E402

settings.register_profile("default", max_examples=100, deadline=None, derandomize=True)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def ref_params():
    return reference_params()


@pytest.fixture(scope="session")
def ref_basis(ref_params):
    return eigenbasis(ref_params)


@pytest.fixture(scope="session")
def finite_u_params():
    return reference_params(u_charging=200.0)


def random_density(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    rank = rank or n
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
