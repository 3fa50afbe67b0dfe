from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def within_se(estimate, target, se, k=3.0):
    """Elementwise |estimate - target| <= k * se."""
    return np.abs(np.asarray(estimate) - np.asarray(target)) <= k * np.asarray(se)


@pytest.fixture
def words_file(tmp_path):
    def make(words, name="words.bin"):
        p = tmp_path / name
        np.asarray(words, dtype="<u4").tofile(p)
        return p

    return make


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict.

    ``passed=None`` records a skipped criterion.
    """

    def record(number, name, passed, detail=""):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        line = f"{status}  #{number:<2} {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
