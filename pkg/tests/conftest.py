import numpy as np
import pytest

from hexpfinsler.metrics import ChartSpec, make_hvector, make_metric, sample_points


def zoo():
    """One admissible metric of every kind, most of them x-dependent."""
    return {
        "euclidean": make_metric("euclidean"),
        "conformal": make_metric({"kind": "riemannian", "field": "conformal", "gradient": [1.0, 0.0]}),
        "constant": make_metric({"kind": "riemannian", "field": "constant", "matrix": [[2.0, 0.3], [0.3, 1.0]]}),
        "randers": make_metric({"kind": "randers", "field": "conformal", "gradient": [0.5, 0.0],
                                "oneform": [0.3, 0.1], "oneform_Q": [[0.0, 0.2], [-0.2, 0.0]]}),
        "kropina": make_metric({"kind": "kropina", "oneform": [1.0, 0.2], "oneform_Q": [[0.1, 0.0], [0.0, 0.1]]}),
        "matsumoto": make_metric({"kind": "matsumoto", "oneform": [0.2, 0.1]}),
    }


@pytest.fixture(scope="session")
def metrics():
    return zoo()


@pytest.fixture(scope="session")
def conformal(metrics):
    return metrics["conformal"]


@pytest.fixture(scope="session")
def randers(metrics):
    return metrics["randers"]


@pytest.fixture(scope="session")
def euclid(metrics):
    return metrics["euclidean"]


@pytest.fixture(scope="session")
def curved_pair(conformal):
    """Constant covector on a conformally flat base: b is not parallel."""
    return conformal, make_hvector("constant", conformal, a=[0.1, 0.0])


def well_conditioned(metric, bound=20.0):
    """Keep samples away from the boundary of the admissible cone (L blows up there for Kropina)."""
    return lambda x, y: metric.evaluate(x, y) < bound


def draw(metric_list, count=32, seed=7, accept=None):
    return sample_points(ChartSpec(seed=seed), metric_list, count, accept=accept)


# acceptance lines collected by tests/test_acceptance.py and the suite runtime check
ACCEPTANCE_LINES: list[str] = []
SUITE_BUDGET_S = 60.0
_START = {}


def pytest_sessionstart(session):
    import time

    _START["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import time

    elapsed = time.perf_counter() - _START.get("t", time.perf_counter())
    lines = list(ACCEPTANCE_LINES)
    if lines:
        ok = elapsed < SUITE_BUDGET_S
        lines.append(f"[{'PASS' if ok else 'FAIL'}] criterion 7 (runtime): full test suite "
                     f"-- {elapsed:.1f} s < {SUITE_BUDGET_S:g} s")
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def pytest_sessionfinish(session, exitstatus):
    import time

    if ACCEPTANCE_LINES and time.perf_counter() - _START.get("t", 0.0) >= SUITE_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1
