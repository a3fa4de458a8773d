import pytest

from randnoma.channel import SystemConfig
from randnoma.optimizer import GridSpec, sweep_k

# shared 25 dB sweep: coarser than the library defaults to keep the suite
# within a few minutes on one core
SWEEP_GRID = GridSpec(0.05, 1.0, 0.05, 0.1, 9.1, 0.3, refinement_rounds=1, refinement_shrink=0.2)
SWEEP_TEMPLATE = SystemConfig(snr_db=25.0, n_slots=200, n_experiments=200, seed=7)

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def sweep_25db():
    rows = sweep_k(SWEEP_TEMPLATE, [4, 5, 6], grid=SWEEP_GRID)
    rows += sweep_k(SWEEP_TEMPLATE, [2, 8], schemes=["cross-slot"], grid=SWEEP_GRID)
    return {(r.K, r.scheme): r for r in rows}


@pytest.fixture
def acceptance_report():
    """Record one summary line per acceptance criterion."""
    def record(n: int, passed: bool, detail: str):
        _ACCEPTANCE.append((n, passed, detail))
        print(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
