import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_verdicts: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = getattr(item.function, "criterion", None)
    if number is None:
        return
    failed_early = report.when == "setup" and report.failed
    if report.when == "call" or failed_early:
        detail = dict(item.user_properties).get("detail", "")
        status = "PASS" if report.passed else "FAIL"
        line = f"criterion {number:>2} {status}  {item.function.__doc__.strip().splitlines()[0]}"
        _verdicts.append(line + (f"  [{detail}]" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_verdicts, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
