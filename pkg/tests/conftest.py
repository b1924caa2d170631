"""Shared fixtures: the (2,1) configuration, a cheap assembly and the full-resolution eps ladder."""

from __future__ import annotations

import pytest

from helixcluster.assembly import assemble
from helixcluster.balance import sb_family

LADDER_EPS = (1e-2, 1e-3, 1e-4)
# enough resolution for structural checks, a few seconds per assembly
COARSE = dict(K=64, band_spacing=5e-3, base_count=1024)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def cluster21():
    charges, cfg, rep = sb_family(2, 1)
    return charges, cfg


@pytest.fixture(scope="session")
def coarse_asm(cluster21):
    charges, cfg = cluster21
    return assemble(cfg.points, charges.kappas, cfg.alpha, 1e-2, 1.0, 1.0, **COARSE)


@pytest.fixture(scope="session")
def coarse_asm3(cluster21):
    charges, cfg = cluster21
    return assemble(cfg.points, charges.kappas, cfg.alpha, 1e-3, 1.0, 1.0, **COARSE)


@pytest.fixture(scope="session")
def ladder(cluster21):
    """Default-resolution assemblies keyed by eps (about a minute in total)."""
    charges, cfg = cluster21
    return {eps: assemble(cfg.points, charges.kappas, cfg.alpha, eps, 1.0, 1.0) for eps in LADDER_EPS}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
