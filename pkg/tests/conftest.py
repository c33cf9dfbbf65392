import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion name -> (passed, detail); filled by test_acceptance.py
CRITERIA = {}


def record(name: str, passed: bool, detail: str) -> bool:
    CRITERIA[name] = (bool(passed), detail)
    print(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})", file=sys.__stdout__, flush=True)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in CRITERIA.items():
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")
