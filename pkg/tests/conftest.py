import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "aeforms" / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"

# lines emitted by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def flagship_run(tmp_path_factory):
    """The flagship scenario run once per session: (bundle, output directory)."""
    from aeforms.config import load_config
    from aeforms.runner import run

    out = tmp_path_factory.mktemp("flagship")
    bundle = run(load_config(SCENARIOS / "flagship.cfg"), out)
    return bundle, out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
