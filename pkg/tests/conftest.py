import copy

import numpy as np
import pytest

from ReplayLab.handler.graph_env import DiffusionGraph, generate_graph

SURE = 1.0 - 1e-9


class FixedStream:
    """Uniform source returning one constant; every edge with p > value fires."""

    def __init__(self, value: float = 0.0):
        self.value = value
        self.taken = 0

    def take(self, n):
        self.taken += n
        return np.full(n, self.value)

    def random(self):
        self.taken += 1
        return self.value


@pytest.fixture
def fixed_stream():
    return FixedStream


@pytest.fixture
def gateway_graph():
    """1 -> 2 -> 3 -> 4 -> 5 with sensitive {2, 3}; node 1 is the only stimulus seed candidate."""
    edges = [(0, 1, 0.5), (1, 2, SURE), (2, 3, SURE), (3, 4, SURE), (4, 5, SURE)]
    return DiffusionGraph.from_edges(6, edges, sensitive=[2, 3])


@pytest.fixture
def path_graph():
    """s -> a -> b as 0 -> 1 -> 2, with sensitive {2}."""
    return DiffusionGraph.from_edges(3, [(0, 1, 0.5), (1, 2, 0.5)], sensitive=[2])


@pytest.fixture(scope="session")
def small_graph():
    return generate_graph(30, 1.1, seed=3)


TINY_CONFIG = {
    "graph": {"nodes": 12, "seeds": [0]},
    "rsd": {"T_exp": 6, "T_decay": 3, "T_rep": 6, "snapshot_every": 3},
    "fields": {"delay": 2},
    "training": {"steps": 40, "batch_steps": 20, "episode_steps": 10, "window": 3},
    "shield": {"n_mc": 2, "horizon": 3, "um_iterations": 2, "um_episodes": 1},
    "seeds": {"master": 0, "episodes": 2},
    "sweep": {"w_H": [1.0, 2.0], "eta": [0.05]},
    "methods": ["GE"],
}


@pytest.fixture
def tiny_config():
    """A run config small enough to train and evaluate in a test."""
    return copy.deepcopy(TINY_CONFIG)
