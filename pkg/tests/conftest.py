import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if rep.when != "call" and status != "error":
                continue
            m = _CRITERION.search(rep.nodeid)
            if m:
                lines.append((int(m.group(1)), m.group(2), "PASS" if status == "passed"
                              else "FAIL", rep.duration))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, name, verdict, secs in sorted(lines):
            terminalreporter.write_line(f"criterion {num} ({name}): {verdict} in {secs:.2f} s")
