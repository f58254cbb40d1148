import pytest

from stsense.harness import train_models
from stsense.synth import default_preset

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def preset():
    return default_preset()


@pytest.fixture(scope="session")
def preset_models(preset):
    return train_models(preset)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
