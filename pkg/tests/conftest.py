from __future__ import annotations

import functools

import pytest

from loglap.assembly import assemble_alt
from loglap.geometry import Ball, Domain, ReflectionFrame, Rect, build_grid
from loglap.kernel import constants
from loglap.solve import solve_torsion

AXES_2D = (ReflectionFrame((1.0, 0.0), 0.0), ReflectionFrame((0.0, 1.0), 0.0))


@functools.lru_cache(maxsize=None)
def torsion(domain: Domain, h: float, planes: tuple = AXES_2D):
    """Torsion field on ``domain`` at cell size ``h`` (cached across tests)."""
    grid = build_grid(domain, h, list(planes))
    F = assemble_alt(grid, constants(domain.dim))
    return F, solve_torsion(F).u


BALL_02 = Domain.union(Ball((0.0, 0.0), 0.2))
BOX = Domain.union(Rect((-0.2, -0.1), (0.2, 0.1)))


@pytest.fixture(scope="session")
def ball_torsion_80():
    return torsion(BALL_02, 1 / 80)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
