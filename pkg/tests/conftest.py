import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


def pytest_terminal_summary(terminalreporter):
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            m = CRITERION.search(getattr(report, "nodeid", ""))
            if not m or (outcome == "passed" and report.when != "call"):
                continue
            detail = dict(getattr(report, "user_properties", [])).get("detail", "")
            status = "PASS" if outcome == "passed" else "FAIL"
            lines[int(m.group(1))] = f"CRITERION {m.group(1)}: {status} {detail}".rstrip()
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
