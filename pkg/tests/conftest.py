import os
import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    ran = set()
    for reports in terminalreporter.stats.values():
        for r in reports:
            nodeid = getattr(r, "nodeid", "")
            if "test_acceptance.py::test_c" in nodeid and getattr(r, "when", "") == "call":
                ran.add(int(nodeid.split("::test_c")[1][:2]))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ran):
        ok, detail = mod.RESULTS.get(num, (False, "no verdict reached (error before measurement)"))
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
