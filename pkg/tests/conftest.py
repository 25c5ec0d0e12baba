import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# One summary line per acceptance criterion, filled in by tests/test_acceptance.py.
CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    k = marker.args[0]
    entry = CRITERIA.setdefault(k, {"title": item.name, "detail": "", "failed": False})
    entry["failed"] |= call.excinfo is not None
    entry["seen"] = True


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        e = CRITERIA[k]
        status = "FAIL" if e["failed"] or not e.get("seen") else "PASS"
        terminalreporter.write_line(f"CRITERION {k} {status} {e['title']} {e['detail']}".rstrip())
