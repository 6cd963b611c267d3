import numpy as np
import pytest

from socsoh import CellSpec, OcvSurface
from socsoh.synthetic import synthetic_surface


@pytest.fixture(scope="session")
def surface():
    return synthetic_surface()


@pytest.fixture(scope="session")
def unit_spec():
    return CellSpec(q0=1.0)


def monotone_coeffs(v0=3.4, slope=0.8, bend=0.0):
    """A degree-9 polynomial with a strictly positive SOC slope on [0, 1]."""
    a = np.zeros(10)
    a[0], a[1], a[3] = v0, slope, bend
    return a


@pytest.fixture(scope="session")
def cubic_surface():
    """Two-level surface whose OCV is an explicit cubic in SOC; used as a hand oracle."""
    return OcvSurface(25.0, [(0.8, monotone_coeffs(3.4, 0.8, 0.2)), (1.0, monotone_coeffs(3.5, 0.7, 0.1))])


# --- acceptance reporting ----------------------------------------------------

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """record(n, ok, detail): collect one clause of acceptance criterion n for the summary."""
    def record(n: int, ok: bool, detail: str) -> bool:
        _CRITERIA.setdefault(n, []).append((bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        parts = _CRITERIA[n]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{status} criterion {n}: " + "; ".join(d for _, d in parts))
