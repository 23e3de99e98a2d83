import functools

import numpy as np
import pytest
from scipy import signal

from wiretest.testbench import ChirpSpec, chirp

ACCEPTANCE_KEY = pytest.StashKey[list]()


@functools.lru_cache(maxsize=4)
def second_order_record(fn=6.0, zeta=0.1, duration=120.0, dt=1e-3):
    """Chirp command and the response of ``wn^2 / (s^2 + 2 zeta wn s + wn^2)`` to it."""
    spec = ChirpSpec(duration=duration)
    t = np.arange(int(round(duration / dt)) + 1) * dt
    u = chirp(spec, t)
    wn = 2 * np.pi * fn
    system = signal.lti([wn * wn], [1.0, 2 * zeta * wn, wn * wn])
    _, y, _ = signal.lsim(system, u, t)
    return spec, t, u, y


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    lines = request.config.stash[ACCEPTANCE_KEY]

    def check(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        lines.append((number, line))
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[ACCEPTANCE_KEY]
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
