from collections import OrderedDict

import pytest

# tag -> {"outcomes": [bool], "details": [str]}
_RESULTS: "OrderedDict[str, dict]" = OrderedDict()


def _tag(item):
    m = item.get_closest_marker("criterion")
    return m.args[0] if m else None


def _entry(tag):
    return _RESULTS.setdefault(tag, {"outcomes": [], "details": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(tag): acceptance criterion this test reports under")


@pytest.fixture
def record(request):
    """record(detail) attaches a line of evidence to the test's criterion."""
    tag = _tag(request.node)

    def note(detail: str):
        if tag is not None:
            _entry(tag)["details"].append(detail)

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    tag = _tag(item)
    if tag is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _entry(tag)["outcomes"].append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for tag, e in _RESULTS.items():
        if not e["outcomes"]:
            continue
        ok = all(e["outcomes"])
        n_ok = sum(e["outcomes"])
        detail = "; ".join(e["details"]) or f"{n_ok}/{len(e['outcomes'])} tests passed"
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {tag}: {detail}")
