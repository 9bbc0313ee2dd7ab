from __future__ import annotations

import numpy as np
import pytest

from interpfe.domains import AxisSquare, HalfPlane, RotatedSquare
from interpfe.meshgen import build_mesh, generate_fitted_foreground
from interpfe.spaces import BackgroundGrid

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request, capsys):
    """Record one PASS/FAIL line per acceptance criterion.

    Lines are echoed immediately and repeated in the terminal summary.
    """
    lines = request.config.stash[_ACCEPTANCE]

    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n[acceptance] {line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def unit_grid(cells=1, bounds=(0.0, 1.0, 0.0, 1.0)):
    return BackgroundGrid.from_bounds(bounds, (bounds[1] - bounds[0]) / cells)


@pytest.fixture
def reference_triangle_mesh():
    return build_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture
def unit_square_mesh():
    """The unit square cut along its diagonal, fitted to a one-cell grid."""
    return generate_fitted_foreground(unit_grid(1), HalfPlane((1.0, 0.0), 2.0))


@pytest.fixture
def rotated_square_mesh():
    """Fitted rotated square on the R = 1 grid (h = 1/4)."""
    grid = BackgroundGrid.from_bounds((-1, 1, -1, 1), 0.25)
    return generate_fitted_foreground(grid, RotatedSquare())


def fitted_square(cells=4):
    grid = unit_grid(cells)
    return grid, generate_fitted_foreground(grid, AxisSquare())
