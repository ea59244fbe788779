import numpy as np
import pytest

from cnhpp.convolution import CovariatePanel
from cnhpp.model import EventLog
from cnhpp.network import NeighborConfig, build_network, build_weights
from cnhpp.simulate import gen_network

ACCEPTANCE = []


def record(name, ok, detail=""):
    """Log one acceptance line; shown in the terminal summary."""
    ACCEPTANCE.append((name, bool(ok), detail))
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def chain_segments(n):
    return [((float(k), 0.0), (float(k + 1), 0.0)) for k in range(n)]


@pytest.fixture
def chain3():
    return build_network(chain_segments(3))


def random_instance(rng, N, T, K, q, topology="chain", xi=None, n_events=None, scale=0.3):
    """Small random network, panel and event log for property checks."""
    net = gen_network(topology, N, int(rng.integers(1 << 31)))
    cfg = NeighborConfig(include_self=bool(rng.integers(2)))
    W = build_weights(net, cfg)
    panel = CovariatePanel.from_covariates(rng.normal(size=(T + K, N, q)), burn_in=K)
    n_ev = int(rng.integers(0, 3 * N)) if n_events is None else n_events
    events = EventLog(rng.integers(0, N, n_ev), rng.uniform(0, T, n_ev), T, N)
    xi = float(rng.uniform(0, 0.95)) if xi is None else xi
    beta = rng.normal(size=q + 1) * scale
    return net, W, panel, events, xi, beta
