import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ajpq.evaluator import load_dataset  # noqa: E402
from ajpq.fixtures import FixtureSpec, make_fixtures  # noqa: E402
from ajpq.ir import load_model  # noqa: E402


@pytest.fixture(scope="session")
def mininet_files(tmp_path_factory):
    """Fixture files built once per session: train/val datasets and the trained mini-net."""
    out = tmp_path_factory.mktemp("fixtures")
    return make_fixtures(FixtureSpec(seed=0), out)


@pytest.fixture(scope="session")
def mininet(mininet_files):
    return load_model(mininet_files["model"])


@pytest.fixture(scope="session")
def val_data(mininet_files):
    return load_dataset(mininet_files["val"])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
