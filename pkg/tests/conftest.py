import pytest

from screengap.mesh import CellGeometry, build_cell_mesh, square_mesh

ACCEPTANCE = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)


def acceptance_lines() -> list:
    return [f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}" for n, (ok, detail) in sorted(ACCEPTANCE.items())]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines():
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def square64():
    return square_mesh(64)


@pytest.fixture(scope="session")
def cell_r01():
    return build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.01))


@pytest.fixture(scope="session")
def cell_closed():
    return build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.0))


@pytest.fixture(scope="session")
def cell_r05():
    return build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.05))
