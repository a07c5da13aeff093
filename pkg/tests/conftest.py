import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def brute_relent(p, q):
    """Plain-python reference for sum p ln(p/q) using mpmath at 50 digits."""
    import mpmath as mp

    mp.mp.dps = 50
    total = mp.mpf(0)
    for a, b in zip(p, q):
        a = mp.mpf(a)
        if a > 0:
            total += a * mp.log(a / mp.mpf(b))
    return float(total)


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion (printed in the summary)."""

    def report(number, passed, detail, part=""):
        label = f"{number}{part}"
        line = f"{'PASS' if passed else 'FAIL'} criterion {label}: {detail}"
        ACCEPTANCE[(number, part)] = line
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
