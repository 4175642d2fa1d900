import pytest

_VERDICTS: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.fixture
def criterion(request):
    """Check one acceptance criterion: ``criterion(ok, detail)``."""

    def record(ok: bool, detail: str = ""):
        request.node.user_properties.append(("detail", detail))
        assert ok, detail

    return record


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    label = props.get("criterion")
    if label is None:
        return
    if report.skipped:
        reason = report.longrepr[-1] if isinstance(report.longrepr, tuple) else ""
        _VERDICTS[label] = ("SKIP", reason.removeprefix("Skipped: "))
    elif report.failed:
        _VERDICTS[label] = ("FAIL", props.get("detail") or f"error during {report.when}")
    elif report.when == "call":
        _VERDICTS[label] = ("PASS", props.get("detail", ""))


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_VERDICTS, key=lambda s: int(s.split()[0])):
        verdict, detail = _VERDICTS[label]
        terminalreporter.write_line(f"{verdict}  {label}: {detail}")
