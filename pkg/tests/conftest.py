import numpy as np
import pytest
from hypothesis import settings

from potopt.grid import make_interval, make_radial

settings.register_profile("potopt", deadline=None, max_examples=50, derandomize=True)
settings.load_profile("potopt")


@pytest.fixture
def unit():
    return make_interval(0.0, 1.0, 201)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(params=[("interval", 1), ("radial", 1), ("radial", 2), ("radial", 3)], ids=lambda p: f"{p[0]}{p[1]}")
def small_grid(request):
    kind, d = request.param
    if kind == "interval":
        return make_interval(-1.0, 2.0, 11)
    return make_radial(1.5, d, 12)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, detail = RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
