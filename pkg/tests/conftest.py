"""Shared, session-cached solver runs (the expensive part of the suite)."""
import contextlib
import io
import json
from pathlib import Path

import numpy as np
import pytest

from invariant_ma.cli import main
from invariant_ma.densities import ConstantDensity
from invariant_ma.exhaustion import ExhaustionSchedule, run_exhaustion
from invariant_ma.groups import cyclic
from invariant_ma.pl import PLConvexFunction

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


class CliRun:
    def __init__(self, name, out, code, stdout=""):
        self.name, self.out, self.code, self.stdout = name, Path(out), code, stdout

    @property
    def report(self) -> dict:
        return json.loads((self.out / "report.json").read_text())

    @property
    def solution(self) -> PLConvexFunction:
        return PLConvexFunction.load(self.out / "solution.json")

    def iterates(self) -> list[PLConvexFunction]:
        return [PLConvexFunction.load(self.out / f) for f in self.report["iterates"]]

    def table(self, name) -> np.ndarray:
        return np.genfromtxt(self.out / name, delimiter=",", names=True, dtype=None, encoding="utf-8")


@pytest.fixture(scope="session")
def cli_runs(tmp_path_factory):
    cache = {}

    def get(name):
        if name not in cache:
            out = tmp_path_factory.mktemp(name)
            buf = io.StringIO()
            with contextlib.redirect_stdout(buf):
                code = main(["solve", "--config", str(CONFIGS / f"{name}.json"), "--out", str(out)])
            cache[name] = CliRun(name, out, code, buf.getvalue())
        return cache[name]

    return get


@pytest.fixture(scope="session")
def identity_result():
    one = ConstantDensity(2, 1.0)
    return run_exhaustion(one, one, cyclic(8), ExhaustionSchedule(k_values=(2, 4, 8, 16)))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
