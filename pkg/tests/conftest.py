import pytest

from dynmatch.builtins import builtin_instance
from dynmatch.engine import MatchingSystem
from dynmatch.planner import solve_spp


@pytest.fixture(scope="session")
def spp_of():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = solve_spp(builtin_instance(name))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def system_of(spp_of):
    return lambda name: MatchingSystem(spp_of(name))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one pass/fail line per acceptance criterion and return the pass flag."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
