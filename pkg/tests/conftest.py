from __future__ import annotations

import pytest

from trustroute.harness import data_path
from trustroute.net import Commodity, Edge, Network, build_path_set, load_network


def parallel_network(links, s=1, d=2):
    """Parallel single-edge routes s->d; ``links`` is a list of (t_ff, capacity)."""
    return Network.from_edges(Edge(i + 1, s, d, t, c) for i, (t, c) in enumerate(links))


@pytest.fixture
def twin():
    net = parallel_network([(10.0, 10.0), (10.0, 10.0)])
    comm = Commodity(1, 2, 10.0)
    return net, build_path_set(net, [comm], k=2), comm


@pytest.fixture
def three_link():
    net = parallel_network([(10.0, 8.0), (12.0, 10.0), (15.0, 12.0)])
    comm = Commodity(1, 2, 15.0)
    return net, build_path_set(net, [comm], k=3), comm


@pytest.fixture
def diamond():
    # 1->2->4 is two hops but expensive; 1->3->5->4 is three hops and cheaper
    edges = [
        Edge(1, 1, 2, 10.0, 10.0),
        Edge(2, 2, 4, 10.0, 10.0),
        Edge(3, 1, 3, 4.0, 10.0),
        Edge(4, 3, 5, 4.0, 10.0),
        Edge(5, 5, 4, 4.0, 10.0),
        Edge(6, 3, 2, 1.0, 10.0),
    ]
    return Network.from_edges(edges)


@pytest.fixture(scope="session")
def sioux_falls():
    return load_network(data_path("SiouxFalls_net.tntp"))


@pytest.fixture(scope="session")
def subnet():
    return load_network(data_path("SiouxFalls_20_10_subnet.tntp"))


# ------------------------------------------------------------ acceptance report

_VERDICTS: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when == "setup" and rep.passed) or rep.when == "teardown":
        return
    label, title = mark.args
    entry = _VERDICTS.setdefault(label, [title, True, []])
    entry[1] = entry[1] and rep.passed
    note = getattr(item, "criterion_note", None)
    if note:
        entry[2].append(note)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, (title, ok, notes) in _VERDICTS.items():
        detail = f" ({'; '.join(notes)})" if notes else ""
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}. {title}{detail}")
