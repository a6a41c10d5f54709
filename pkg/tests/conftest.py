import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bubbleride import load_scenario, shipped_scenario  # noqa: E402

SCENARIOS = ("lq", "interactions_off", "bubble", "lppl")


def scenario(name: str, **changes):
    cfg = load_scenario(shipped_scenario(name))
    return cfg.replace(**changes) if changes else cfg


@pytest.fixture
def bubble():
    return scenario("bubble")


@pytest.fixture
def small_bubble():
    """Bubble scenario cut down to run in well under a second."""
    return scenario("bubble", n_steps=40, n_paths=400, idio_per_common=20, fp_max_iter=4)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, passed: bool, detail: str) -> bool:
    """Store a one-line verdict for an acceptance criterion and return it."""
    line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
