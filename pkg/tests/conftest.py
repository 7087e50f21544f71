from __future__ import annotations

import os
import tempfile

import numpy as np
import pytest

_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    # keep simulated null tables out of the user's cache and share them across tests
    if "IFPCA_NULL_CACHE" not in os.environ:
        os.environ["IFPCA_NULL_CACHE"] = tempfile.mkdtemp(prefix="ifpca-null-")
    config.stash[_RESULTS_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(id, passed, detail); passed=None means skipped."""
    results = request.config.stash[_RESULTS_KEY]

    def record(cid: str, passed: bool | None, detail: str = "") -> bool:
        results.append((cid, None if passed is None else bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS_KEY, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in sorted(results, key=lambda r: r[0]):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status}  {cid:<4} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

