_ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def record_acceptance(criterion: str, status: str, detail: str) -> None:
    _ACCEPTANCE_RESULTS.append((criterion, status, detail))
    print(f"[acceptance] {criterion}: {status} — {detail}", flush=True)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{criterion}: {status} — {detail}")
