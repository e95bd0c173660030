import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from neutral_tci.pathspace import SegmentPath, TimeGrid

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def path_from(grid: TimeGrid, fn, dim: int = 1) -> SegmentPath:
    t = grid.times
    vals = np.array([np.broadcast_to(np.atleast_1d(fn(s)), (dim,)) for s in t], float)
    return SegmentPath(grid, vals)


# acceptance criteria report: one line per criterion at the end of the run
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
