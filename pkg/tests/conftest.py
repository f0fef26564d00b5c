import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


class Recorder:
    def __call__(self, key: str, title: str, passed: bool, detail: str = ""):
        _ACCEPTANCE[key] = (title, bool(passed), detail)
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


def _order(key):
    num = "".join(ch for ch in key if ch.isdigit())
    return int(num or 0), key


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=_order):
        title, ok, detail = _ACCEPTANCE[key]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {key:>3}  {title}: {detail}")
    n_ok = sum(v[1] for v in _ACCEPTANCE.values())
    tr.write_line(f"{n_ok}/{len(_ACCEPTANCE)} criteria pass")
