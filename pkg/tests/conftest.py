import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mpcsbm import ClusterState, Graph, MPCConfig, SbmParams, generate_sbm
from mpcsbm.sbm import distribute_edges

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def fleet_for(g: Graph, s: int = 64, M: int = 4096, seed: int = 0, **cfg) -> ClusterState:
    """A roomy fleet with g's edges distributed and no space budget."""
    cluster = ClusterState(M, s, config=MPCConfig(**cfg), seed=seed, N=g.N)
    distribute_edges(g, cluster)
    return cluster


def path_graph(N: int) -> Graph:
    return Graph(N, np.array([(i, i + 1) for i in range(N - 1)], dtype=np.int64))


def complete_graph(N: int) -> Graph:
    iu = np.triu_indices(N, 1)
    return Graph(N, np.column_stack(iu))


@pytest.fixture(scope="session")
def small_sbm():
    return generate_sbm(SbmParams(20, 2, 0.5, 0.1, 3))


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdicts, one line per criterion, at the end of the run."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
