import math

import numpy as np
import pytest

from floquet_tunnel.model import UnitSystem, Waveform, build_triple_barrier

A = UnitSystem.angstrom_to_au
MEV = UnitSystem.mev_to_au

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(number, title, passed, detail):
        line = f"[criterion {number:>2}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _acceptance_lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split("]")[0].split()[-1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def omega70():
    return float(MEV(70.0))


def triple(a=40.0, b=20.0, v0=237.0, **kw):
    """Triple barrier in the GaAs/AlGaAs-like parameters used throughout, lengths in Angstrom."""
    return build_triple_barrier(float(A(a)), float(A(b)), float(MEV(v0)), 0.0667, 0.0918, **kw)


def rect_barrier_T(e, v0, d, m1, m2):
    """Two-mass rectangular barrier with BenDaniel-Duke matching (textbook closed form)."""
    k = math.sqrt(2 * m1 * e)
    if e > v0:
        q = math.sqrt(2 * m2 * (e - v0))
        r = (k / m1) / (q / m2)
        return 1.0 / (1.0 + 0.25 * (r - 1 / r) ** 2 * math.sin(q * d) ** 2)
    kappa = math.sqrt(2 * m2 * (v0 - e))
    r = (k / m1) / (kappa / m2)
    return 1.0 / (1.0 + 0.25 * (r + 1 / r) ** 2 * math.sinh(kappa * d) ** 2)


@pytest.fixture
def weak_laser(omega70):
    return Waveform.monochromatic(omega70, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(20241017)
