import numpy as np
import pytest

from hardsfm.hardfamily import HardParams
from hardsfm.hypergrid import Partition


@pytest.fixture
def p60():
    return HardParams(60, 3, 4)


@pytest.fixture
def blocks60():
    """Partition with P_1 = 0..59, P_2 = 60..119, P_3 = 120..179."""
    return Partition(np.repeat(np.arange(1, 4), 60), r=3, seed=None)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], outcome, props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for crit, outcome, detail in sorted(lines, key=lambda t: int(t[0].split()[0][2:])):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {crit}  {detail}".rstrip())
