import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

# Filled by test_acceptance.py; echoed after the run so each shipping
# criterion gets one visible PASS/FAIL line even under output capture.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num, name, ok in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"[criterion {num:>2}] {name}: {'PASS' if ok else 'FAIL'}")
