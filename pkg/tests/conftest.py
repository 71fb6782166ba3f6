import pytest

from lbpsdg.experiment import CACHE_ENV, make_synthetic_dataset

ACCEPTANCE_LINES = []


@pytest.fixture(autouse=True)
def _isolated_cache(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """4 subjects x 4 videos of the two-speed synthetic set."""
    root = tmp_path_factory.mktemp("small")
    return make_synthetic_dataset(root, subjects=4, videos_per_subject=4, seed=3)


@pytest.fixture(scope="session")
def full_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("full")
    return make_synthetic_dataset(root)


@pytest.fixture
def acceptance_report():
    def record(criterion, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
