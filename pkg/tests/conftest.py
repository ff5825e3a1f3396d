import csv
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def record(capsys):
    def _record(n, ok, title, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
        ACCEPTANCE[n] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _record


@dataclass
class DeskRun:
    out: Path
    rows: list
    seconds: float

    def model(self, name):
        from ganinv import modelio

        return modelio.load(self.out / f"{name}.model")


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """The synthetic 6-of-10 experiment run once through the CLI, at defaults."""
    from ganinv.cli import main

    root = tmp_path_factory.mktemp("desk")
    started = time.perf_counter()
    code = main(["reproduce", "--experiment", "synthetic", "--out", str(root), "-q"])
    seconds = time.perf_counter() - started
    assert code == 0
    out = root / "synthetic"
    with open(out / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    return DeskRun(out, rows, seconds)
