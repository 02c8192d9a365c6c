from collections import deque
from importlib.resources import files

import pytest

from ondemcpp.workspace import load_map


def bundled(name):
    return load_map(files("ondemcpp") / "maps" / f"{name}.map")


def flood_components(free_cells):
    """Plain BFS labelling of a set of cells under 4-connectivity."""
    free_cells = set(free_cells)
    seen = set()
    comps = []
    for c in sorted(free_cells):
        if c in seen:
            continue
        comp = {c}
        seen.add(c)
        q = deque([c])
        while q:
            x, y = q.popleft()
            for n in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                if n in free_cells and n not in seen:
                    seen.add(n)
                    comp.add(n)
                    q.append(n)
        comps.append(comp)
    return comps


@pytest.fixture(scope="session")
def maze128():
    return bundled("maze-128-128-2")


@pytest.fixture(scope="session")
def room64():
    return bundled("room-64-64-8")


# criterion label ("1", "1 budget", ...) -> (passed, detail); printed at session end
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(label, ok, detail=""):
        ACCEPTANCE[str(label)] = (bool(ok), detail)
        assert ok, f"criterion {label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0]), s)):
        ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"criterion {label:<9} {'PASS' if ok else 'FAIL'}  {detail}")
