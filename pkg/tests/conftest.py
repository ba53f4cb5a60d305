import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

acceptance_lines = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[acceptance_lines] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(acceptance_lines, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scenario_runs():
    """All built-in scenarios, run once per session without writing files."""
    from hidden_attractors.config import SCENARIOS
    from hidden_attractors.io import run_scenario

    return {sid: run_scenario(sid, write=False) for sid in SCENARIOS}
