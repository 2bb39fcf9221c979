import pytest

from adprior.cohort import CohortConfig, build_cohort
from adprior.compiler import CompileConfig, build_preset_pool, compile_context
from adprior.ingestion import build_snapshot, future_events
from adprior.synthgen import generate_world


@pytest.fixture(scope="session")
def world():
    return generate_world(1000, 200, 2000, 120, seed=7, affinity_strength=0.9)


@pytest.fixture(scope="session")
def small_world():
    return generate_world(150, 40, 300, 60, seed=11, affinity_strength=0.9)


@pytest.fixture(scope="session")
def snapshot(world):
    return build_snapshot(world.events, world.catalog, world.profiles, world.anchor_date)


@pytest.fixture(scope="session")
def future(world):
    return future_events(world.events, world.anchor_date)


@pytest.fixture(scope="session")
def cohort(snapshot, future):
    return build_cohort(snapshot, future, CohortConfig.v1())


@pytest.fixture(scope="session")
def contexts(snapshot, cohort):
    config = CompileConfig()
    pool = build_preset_pool(snapshot.catalog.values(), config.preset_pool_size)
    return {ex.user_id: compile_context(snapshot, ex.user_id, config, preset_pool=pool)
            for ex in cohort}


@pytest.fixture(scope="session")
def labels(cohort):
    return {ex.user_id: ex.label for ex in cohort}



# acceptance report: one line per criterion, shown in the terminal summary

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
