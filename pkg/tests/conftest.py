import pytest

from stationary_ar.bench import ExperimentConfig, run_records

# One line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE_LINES = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


DESK_CONFIG = ExperimentConfig(orders=(1, 2, 3, 4, 5), n_processes=50, n_repetitions=5,
                               raw_length=1500, burn_in=500, seed=20240601, workers=1)


@pytest.fixture(scope="session")
def desk_sweep():
    """The 1,250-series desk-scale sweep, run once per session."""
    import time
    start = time.perf_counter()
    records = run_records(DESK_CONFIG)
    return records, time.perf_counter() - start
