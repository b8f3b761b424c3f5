import re
import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, [])]
    ran = {int(m.group(1)) for r in reports
           if (m := re.search(r"test_acceptance\.py::test_criterion_(\d+)_", getattr(r, "nodeid", "")))}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.lines(ran):
        terminalreporter.write_line(line)
