import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion and echo it immediately."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def report(number, title, ok, detail):
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
        lines.append((number, line))
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
