import functools
import time

import pytest

from mmcsim.scenario import load_scenario, run_scenario


@functools.lru_cache(maxsize=None)
def preset_run(name, plant="switched"):
    """Run a preset once per session; returns (result, seconds)."""
    sc = load_scenario(None, preset=name, plant=plant)
    t0 = time.perf_counter()
    res = run_scenario(sc)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def run_preset():
    return preset_run


ACCEPTANCE = {}


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
