"""Shared fixtures and the acceptance report hook."""

import numpy as np
import pytest

from freqdistill.graph import Split, build_graph

_ACCEPTANCE = {}


def random_graph(rng, n, p=0.4, d=3, num_classes=2, split=True):
    """Erdos-Renyi graph with Gaussian features and a trivial split."""
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = np.argwhere(upper)
    labels = np.arange(n) % num_classes
    sp_ = None
    if split:
        ids = np.arange(n)
        sp_ = Split(ids[: n // 2], ids[n // 2: 3 * n // 4], ids[3 * n // 4:])
    return build_graph(edges, rng.normal(size=(n, d)), labels, num_classes, split=sp_)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def edge2():
    """Two nodes joined by one edge, identity features."""
    return build_graph([(0, 1)], np.eye(2), [0, 1], split=Split([0], [1], []))


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], np.eye(3), [0, 1, 0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for name, value in report.user_properties:
        if name == "criterion":
            _ACCEPTANCE[value] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split(".")[0])):
        verdict = "PASS" if _ACCEPTANCE[label] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}")
