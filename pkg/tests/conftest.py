import time
import warnings

import numpy as np
import pytest

from pwabarrier import fixtures as fx
from pwabarrier.errors import NoCertifiedMember
from pwabarrier.synthesis import SynthesisConfig, uis


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def stable():
    return fx.linear_system(-1.0)


@pytest.fixture(scope="session")
def pendulum():
    return fx.pendulum_system(16)


@pytest.fixture(scope="session")
def pendulum_uis(pendulum):
    """Three-alpha union on the pendulum; keys union, report, results, elapsed."""
    t0 = time.perf_counter()
    union, report, results = uis(pendulum, fx.PENDULUM_ALPHAS, SynthesisConfig(), mc_samples=100_000, grid=200)
    return dict(union=union, report=report, results=results, elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def example2_uis():
    """Two-alpha union on the radial example; ``union`` is None when nothing certifies."""
    d = fx.example2_system(8)
    t0 = time.perf_counter()
    out = dict(system=d, union=None, report=None, error=None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            out["union"], out["report"], out["results"] = uis(d, fx.EXAMPLE2_ALPHAS, SynthesisConfig())
        except NoCertifiedMember as exc:
            out["error"], out["results"] = exc, exc.results
    out["elapsed"] = time.perf_counter() - t0
    return out


# -- one summary line per acceptance criterion --------------------------------

_criteria = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.failed and report.when == "setup"):
        _criteria[props["criterion"]] = ("PASS" if report.passed else "FAIL", props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        status, detail = _criteria[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {detail}")
