import re

import pytest

from parastab.fem import assemble
from parastab.mesh import generate_disk_mesh


@pytest.fixture(scope="session")
def ops4():
    return assemble(generate_disk_mesh(4))


@pytest.fixture(scope="session")
def ops6():
    return assemble(generate_disk_mesh(6))


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one ``ACCEPTANCE <id> PASS|FAIL: detail`` line, then assert."""
    def record(cid, ok, detail):
        line = f"ACCEPTANCE {cid} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def _order(line):
    cid = line.split()[1]
    return int(re.match(r"\d+", cid).group()), cid


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_order):
            terminalreporter.write_line(line)
