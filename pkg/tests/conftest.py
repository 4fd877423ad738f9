"""Shared fixtures, random-instance builders, and independent oracles."""

from __future__ import annotations

import random
from pathlib import Path

import numpy as np
import pytest

import reliroute as rr

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURE_PATH = REPO_ROOT / "fixtures" / "appendix_a.json"


@pytest.fixture(scope="session")
def fixture_graph():
    return rr.load_graph(FIXTURE_PATH)


def edge_by_label(graph, label):
    return graph.edge_index_by_label(label)


def random_edge_dist(rng, max_delta=5, max_width=6, dt=1.0):
    delta = rng.randint(1, max_delta)
    width = rng.randint(1, max_width)
    mass = np.zeros(delta + width)
    for k in range(width):
        mass[delta + k] = rng.random() + 0.01
    mass /= mass.sum()
    return rr.DiscreteDistribution(mass, dt=dt)


def random_connected_graph(rng, max_nodes=10, max_extra_edges=20, min_nodes=2,
                           max_delta=5, max_width=6):
    """Random multigraph with a guaranteed directed 0 -> n-1 path.

    Returns ``(graph, source_id, dest_id)``; node ids are 0..n-1 integers.
    """
    n = rng.randint(min_nodes, max_nodes)
    nodes = [(i, rng.random() * 10, rng.random() * 10) for i in range(n)]
    middle = list(range(1, n - 1))
    rng.shuffle(middle)
    chain = [0, *middle, n - 1]
    pairs = list(zip(chain, chain[1:]))
    for _ in range(rng.randint(0, max_extra_edges)):
        a, b = rng.randrange(n), rng.randrange(n)
        if a != b:
            pairs.append((a, b))
    edges = [
        (a, b, random_edge_dist(rng, max_delta=max_delta, max_width=max_width))
        for a, b in pairs
    ]
    return rr.StochasticGraph(1.0, nodes, edges), 0, n - 1


def reference_policy(graph, dest, T):
    """Plain-Python evaluation of the dynamic program; the slow oracle.

    Deliberately shares no code with the production engines: explicit loops,
    explicit sums, first-maximizer ties in canonical edge order.
    """
    d = graph.node_index(dest)
    V = graph.num_nodes
    u = np.zeros((V, T + 1))
    w = np.full((V, T + 1), rr.NO_EDGE, dtype=np.int64)
    u[d, :] = 1.0
    for t in range(1, T + 1):
        for i in range(V):
            if i == d:
                continue
            best, best_edge = 0.0, rr.NO_EDGE
            for e in graph.out_edges[i]:
                j = int(graph.edge_heads[e])
                mass = graph.edge_dists[e].mass
                total = 0.0
                for tau in range(1, min(t, len(mass) - 1) + 1):
                    if mass[tau] > 0.0:
                        total += mass[tau] * u[j, t - tau]
                if total > best:
                    best, best_edge = total, int(e)
            u[i, t] = best
            w[i, t] = best_edge
    return u, w


def edge_evaluation(graph, u, edge, t):
    """One u_ij(t) sum recomputed directly from a stored u table."""
    j = int(graph.edge_heads[edge])
    mass = graph.edge_dists[edge].mass
    return float(
        sum(mass[tau] * u[j, t - tau] for tau in range(1, min(t, len(mass) - 1) + 1))
    )
