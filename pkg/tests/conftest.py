import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per acceptance criterion at the end of the run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            if name.startswith("test_"):
                name = name[len("test_"):]
            rows.append((name.replace("_", "-"), status == "passed"))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in rows:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}")
