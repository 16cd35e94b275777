import time

import pytest

from driftfusion.harness import HarnessConfig, run_experiment, unimodal_oracle_error
from driftfusion.stream import StreamConfig

ACCEPTANCE = {}


def collapse_config(seed=0):
    return HarnessConfig(seed=seed, stream=StreamConfig(preset="unilateral-m1", severity=1.0))


@pytest.fixture(scope="session")
def collapse_run():
    cfg = collapse_config()
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    end = cfg.phase1_steps + cfg.phase2_steps
    oracle = unimodal_oracle_error(cfg, 2, range(cfg.stream.drift_at, end), range(end - cfg.report_window, end))
    return res, oracle, elapsed


@pytest.fixture(scope="session")
def stationary_run():
    return run_experiment(HarnessConfig(stream=StreamConfig(preset="stationary")))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = ACCEPTANCE.get(report.nodeid)
    if marker is not None:
        marker["outcome"] = report.outcome


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            ACCEPTANCE[item.nodeid] = {"n": m.args[0], "text": m.args[1], "outcome": "not run"}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for info in sorted(ACCEPTANCE.values(), key=lambda d: d["n"]):
        status = {"passed": "PASS", "failed": "FAIL"}.get(info["outcome"], info["outcome"].upper())
        terminalreporter.write_line(f"criterion {info['n']:>2}: {status}  {info['text']}")
