from pathlib import Path

import numpy as np
import pytest

from qnum import reformulation as rf
from qnum.network import LinkSpec, RouteSpec, build_network, load_scenario, surfnet_scenario_path

SCENARIO_DIR = Path(__file__).parent / "scenarios"
CORPUS = sorted(SCENARIO_DIR.glob("*.json")) + [surfnet_scenario_path()]


def network_from(name):
    if name == "surfnet":
        return load_scenario(surfnet_scenario_path()).network
    return load_scenario(SCENARIO_DIR / f"{name}.json").network


def shared_network(measure_a="sk", measure_b="sk"):
    links = [LinkSpec("shared", 10.0), LinkSpec("left", 20.0), LinkSpec("right", 15.0)]
    routes = [RouteSpec("r1", ("shared", "left"), measure_a), RouteSpec("r2", ("shared", "right"), measure_b)]
    return build_network(links, routes)


def single_network(d=150.0, measure="sk"):
    return build_network([LinkSpec("L", d)], [RouteSpec("r", ("L",), measure)])


def sample_feasible(network, measures=None, n=100, rng=None, margin=1e-3, spread=12.0):
    """Rejection-sample log-rates whose link slacks and route margins exceed ``margin``."""
    rng = rng or np.random.default_rng(0)
    measures = rf.resolve_measures(network, measures)
    hi = np.log([network.d[network.route_links(i)].min() for i in range(network.n_routes)])
    out = []
    while len(out) < n:
        y = rng.uniform(hi - spread, hi, size=(4096, network.n_routes))
        for row in y:
            if rf.feasibility(network, measures, row, margin=margin).feasible:
                out.append(row)
                if len(out) == n:
                    break
    return np.array(out)


def fd_gradient(fn, y, rel_step=1e-6):
    y = np.asarray(y, dtype=float)
    g = np.empty_like(y)
    for k in range(len(y)):
        h = rel_step * (1.0 + abs(y[k]))
        e = np.zeros_like(y)
        e[k] = h
        g[k] = (fn(y + e) - fn(y - e)) / (2 * h)
    return g


def fd_jacobian(fn, y, rel_step=1e-5):
    y = np.asarray(y, dtype=float)
    cols = []
    for k in range(len(y)):
        h = rel_step * (1.0 + abs(y[k]))
        e = np.zeros_like(y)
        e[k] = h
        cols.append((fn(y + e) - fn(y - e)) / (2 * h))
    return np.array(cols).T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def surfnet():
    return network_from("surfnet")


# published SURFnet optimum, rounded to four decimals
SURFNET_REF_Y = np.array([-0.1530, -0.2850, -0.2523, -0.3268])
SURFNET_REF_X = np.array([0.8581, 0.7520, 0.7770, 0.7213])
SURFNET_REF_U = np.array([0.8991, 0.8950, 0.8994, 0.8945])
SURFNET_REF_FIDELITY = np.array([0.9243, 0.9212, 0.9245, 0.9209])


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
