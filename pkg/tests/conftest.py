import numpy as np
import pytest

from pullfactor import (
    SPEED_OF_LIGHT,
    CavityGeometry,
    MediumModel,
    ResonanceEquation,
    ResonanceLine,
    epsilon_threshold,
)

GAMMA = 6e6
F_M = SPEED_OF_LIGHT / 795e-9
# reference cavity: 80 cm round trip, 22 mm Rb cell
CAVITY = CavityGeometry.from_total(0.80, 0.022)
COUPLING = F_M * 0.022 / 0.80
EPS_TH = 8 * GAMMA / F_M * 0.80 / 0.022


def line(ratio, gamma=GAMMA):
    eth = epsilon_threshold(CAVITY, ResonanceLine(1.0, gamma, F_M))
    return ResonanceLine(ratio * eth, gamma, F_M)


def medium(ratio, gamma=GAMMA):
    return MediumModel((line(ratio, gamma),))


def equation(ratio, gamma=GAMMA):
    return ResonanceEquation(CAVITY, medium(ratio, gamma))


def oracle_G(x, ratio, gamma=GAMMA):
    """Resonance map written out by hand, independent of the package."""
    eps = ratio * 8 * gamma / F_M * 0.80 / 0.022
    return x + COUPLING * eps * gamma * x / (x * x + gamma * gamma)


def oracle_dG(x, ratio, gamma=GAMMA):
    eps = ratio * 8 * gamma / F_M * 0.80 / 0.022
    return 1 + COUPLING * eps * gamma * (gamma**2 - x * x) / (x * x + gamma**2) ** 2


def sign_scan_count(u, ratio, lo, hi, n=100_001, gamma=GAMMA):
    """Number of solutions of G(x) = u by sign changes on a dense grid."""
    x = np.linspace(lo, hi, n)
    h = oracle_G(x, ratio, gamma) - u
    s = np.sign(h)
    return int(np.count_nonzero(s[:-1] * s[1:] < 0) + np.count_nonzero(s == 0))


@pytest.fixture
def cavity():
    return CAVITY


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = []


def record(criterion, ok, detail, seconds):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({seconds:.1f} s) {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
