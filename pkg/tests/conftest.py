import os

import pytest
from hypothesis import HealthCheck, settings

from shared_cacc import configs

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def case2():
    return configs.load("case2_machine")


@pytest.fixture(scope="session")
def case3():
    return configs.load("case3_machine")


@pytest.fixture(scope="session")
def case1_equilibrium():
    return configs.load("case1_equilibrium")


@pytest.fixture(scope="session")
def cli_sweep(tmp_path_factory):
    """The default 11-point authority sweep on the shipped Case 2 config, through the CLI."""
    import csv
    import json
    import time

    from shared_cacc.cli import main

    out = tmp_path_factory.mktemp("sweep")
    t0 = time.perf_counter()
    code = main(["sweep", "--config", "case2_machine", "--grid", "0:0.1:1", "--out-dir", str(out)])
    seconds = time.perf_counter() - t0
    with open(out / "case2_machine_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    summary = json.loads((out / "case2_machine_sweep_threshold.json").read_text())
    return {"code": code, "rows": rows, "summary": summary, "seconds": seconds, "dir": out}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
