import numpy as np
import pytest

from polycdg.mesh import gen_polygonal, gen_triangular


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion.

    The line is printed immediately and repeated in the terminal summary so
    the verdicts stay visible in a plain `pytest -v` run.
    """

    def record(criterion: int, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def tri2():
    return gen_triangular(2)


@pytest.fixture(scope="session")
def tri3():
    return gen_triangular(3)


@pytest.fixture(scope="session")
def poly1():
    return gen_polygonal(1)


@pytest.fixture(scope="session")
def poly2():
    return gen_polygonal(2)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
