from functools import lru_cache
from pathlib import Path

import pytest

from fuyau.config import build_problem, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

_criterion_lines: dict[int, list[str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criterion_lines):
        for line in _criterion_lines[k]:
            terminalreporter.write_line(line)


class CriterionRecorder:
    def __call__(self, k: int, passed: bool, detail: str) -> bool:
        _criterion_lines.setdefault(k, []).append(f"criterion {k}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed


@pytest.fixture(scope="session")
def record():
    return CriterionRecorder()


@lru_cache(maxsize=None)
def config(name: str):
    return load_config(CONFIGS / f"{name}.yaml")


@lru_cache(maxsize=None)
def continuation_run(name: str, N: int | None = None, A: float | None = None):
    """(data, trace) for a config solved to t = 1; cached across the session."""
    from fuyau.continuation import run_continuation

    data = build_problem(config(name), A=A, N=N)
    return data, run_continuation(data)
