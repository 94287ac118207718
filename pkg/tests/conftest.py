from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from chainalloc.model import Placement, ResourceVector, Scenario, SubTaskId, TaskSpec  # noqa: E402
from chainalloc.scenario import make_scenario  # noqa: E402

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record_acceptance(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


def toy_task(cpus, name="task") -> TaskSpec:
    return TaskSpec(tuple(ResourceVector(c, 1, 0, 1) for c in cpus), name=name)


def toy_scenario() -> Scenario:
    """Two chains on three small nodes (the decoding walkthrough instance)."""
    node = ResourceVector(10, 10, 1, 100)
    return Scenario((node,) * 3, (toy_task([3, 3, 5, 4, 4]), toy_task([1, 4, 3, 3])))


def natural_order(s: Scenario) -> list[SubTaskId]:
    return list(s.ids)


def exchange_setup():
    """Host agent 0 = {t03, t01, t04, t10, t00, t12}; agent 1 = {t02, t13, t21};
    agent 2 = {t11, t20, t22}."""
    node = ResourceVector(1000, 100, 10, 1000)
    t0 = TaskSpec(tuple(ResourceVector(c, 1, 0, 1) for c in (300, 400, 50, 50, 100)))
    t1 = TaskSpec(tuple(ResourceVector(50, 1, 0, 1) for _ in range(4)))
    t2 = TaskSpec(tuple(ResourceVector(50, 1, 0, 1) for _ in range(3)))
    s = Scenario((node,) * 3, (t0, t1, t2))
    groups = {
        0: [SubTaskId(0, 3), SubTaskId(0, 1), SubTaskId(0, 4), SubTaskId(1, 0), SubTaskId(0, 0), SubTaskId(1, 2)],
        1: [SubTaskId(0, 2), SubTaskId(1, 3), SubTaskId(2, 1)],
        2: [SubTaskId(1, 1), SubTaskId(2, 0), SubTaskId(2, 2)],
    }
    return s, Placement.from_groups(s, groups)


@pytest.fixture(scope="session")
def std8() -> Scenario:
    return make_scenario(8, 8)


@pytest.fixture
def toy() -> Scenario:
    return toy_scenario()
