import time

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lab", max_examples=25, deadline=None)
settings.load_profile("lab")

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class Criterion:
    """Times one acceptance criterion and records a pass/fail line."""

    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit
        self.checks = []
        self.t0 = time.perf_counter()
        self.extra_time = 0.0

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.t0 + self.extra_time
        self.check("time", elapsed < self.limit, f"{elapsed:.1f}s < {self.limit:g}s")
        ok = all(c[1] for c in self.checks)
        failed = [f"{n} ({d})" for n, good, d in self.checks if not good]
        details = "; ".join(f"{n}: {d}" for n, _, d in self.checks if d)
        line = f"criterion {self.number} {'PASS' if ok else 'FAIL'}: {self.title} [{details}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, "failed checks: " + ", ".join(failed)


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
