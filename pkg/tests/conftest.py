import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def verdict(request):
    """Record one summary line per acceptance criterion; printed at the end of the run."""
    key = request.node.name

    def record(criterion: str, ok: bool | None, detail: str) -> None:
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        line = f"[{status}] {criterion}: {detail}"
        ACCEPTANCE_LINES[key] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES.values(), key=lambda s: int(s.split("AC")[1].split(" ")[0])):
        terminalreporter.write_line(line)
