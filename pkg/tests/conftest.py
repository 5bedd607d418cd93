import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=150,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def mass_arrays(draw, min_omega=0.0):
    """(m_R, m_notR, m_omega) on the simplex, optionally keeping some ignorance."""
    a = draw(st.floats(0.0, 1.0))
    b = draw(st.floats(0.0, 1.0))
    c = draw(st.floats(min_omega, 1.0)) if min_omega > 0 else draw(st.floats(0.0, 1.0))
    total = a + b + c
    if total == 0:
        return np.array([0.0, 0.0, 1.0])
    m = np.array([a, b, c]) / total
    if m[2] < min_omega:
        m = (1 - min_omega) * m + np.array([0.0, 0.0, min_omega])
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the terminal summary, then assert."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {name}" + (f" ({detail})" if detail else "")
        _VERDICTS.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
