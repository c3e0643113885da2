import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    name = request.node.name
    label = name.split("_")[1].upper() if name.startswith("test_c") else name
    if "[" in name:
        label += name[name.index("["):]
    state = {"name": label, "detail": ""}

    def note(detail):
        state["detail"] = detail

    yield note
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    line = f"{state['name']} {'PASS' if ok else 'FAIL'}: {state['detail']}"
    if rep is not None and rep.failed and not state["detail"]:
        line += str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") else ""
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
