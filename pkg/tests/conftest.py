import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cubicstring.potential import Potential

settings.register_profile(
    "numeric",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("numeric")


@pytest.fixture(scope="session")
def zero_pot():
    return Potential.zero(1.0)


@pytest.fixture(scope="session")
def cosine_pot():
    return Potential.cosine(1.0, 0.3)


@pytest.fixture(scope="session")
def theta07():
    """theta = exp(2 i phi) for phi = 0.7."""
    return complex(math.cos(1.4), math.sin(1.4))


def relative_error(actual, expected):
    actual = np.asarray(actual, dtype=complex)
    expected = np.asarray(expected, dtype=complex)
    return float(np.max(np.abs(actual - expected) / np.maximum(1.0, np.abs(expected))))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one acceptance line; returns whether it passed."""

    def record(criterion, label, value, tolerance, passed=None, unit=""):
        ok = bool(np.isfinite(value) and value <= tolerance) if passed is None else bool(passed)
        line = (f"criterion {criterion:>4s}  {'PASS' if ok else 'FAIL'}  {label}: "
                f"{value:.3e}{unit} (tolerance {tolerance:.1e}{unit})")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
