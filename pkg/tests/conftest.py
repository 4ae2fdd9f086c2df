import numpy as np
import pytest

from ppdauc.numerics import make_rng


@pytest.fixture
def rng():
    return make_rng(1234, "tests")


def rel_err(a, b):
    """Elementwise |a-b| / (1+|b|), the normalisation used for gradient checks."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(b)))) if a.size else 0.0


# (criterion, verdict, text) rows filled in by the acceptance suite
SCORECARD = []


def pytest_terminal_summary(terminalreporter):
    if not SCORECARD:
        return
    terminalreporter.section("acceptance criteria")
    for num, verdict, text in SCORECARD:
        terminalreporter.write_line(f"criterion {num}: {verdict} - {text}")
