import pytest

from safetyscore.defaults import PROFILES, default_conversion, default_graph
from safetyscore.pipeline import build_store, fit_system
from safetyscore.rss import ScoreWeights
from safetyscore.simulate import MachineSpec, TraceConfig, generate_trace

WEIGHTS = ScoreWeights(d_mu=2.0)


@pytest.fixture(scope="session")
def graph():
    return default_graph()


@pytest.fixture(scope="session")
def small_trace(graph):
    cfg = TraceConfig(frames=300, profiles=PROFILES, burst_rate=0.02, burst_length=60)
    return generate_trace(cfg, 11, graph)


@pytest.fixture(scope="session")
def small_model(small_trace, graph):
    return fit_system(small_trace, graph, default_conversion(), ridge="gcv").model


@pytest.fixture(scope="session")
def small_store(small_trace, small_model):
    return build_store(small_trace, small_model, MachineSpec(), WEIGHTS)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
