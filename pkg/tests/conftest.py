import pytest

from pclindex.models import build_model
from pclindex.verify import full_report

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[1])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def webcrawl():
    return build_model("webcrawl")


@pytest.fixture(scope="session")
def channel():
    return build_model("channel")


@pytest.fixture(scope="session")
def reset():
    return build_model("reset")


@pytest.fixture(scope="session")
def reports(webcrawl, channel, reset):
    return {m.name: full_report(m) for m in (webcrawl, channel, reset)}
