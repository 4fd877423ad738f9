"""Most-reliable-path search guided by the arrival-probability policy.

A fixed path can never beat the optimal policy, so for a partial path ``P``
ending at node ``i`` the mixed quantity

    key(P) = sum_t q_P(t) * u_i(T - t)

(travel the committed prefix, then follow the policy) upper-bounds the
reliability of every completion of ``P``.  Extending a path can only lower
its key, which makes the key an admissible priority for best-first search:
the first path popped that ends at the destination is the most reliable one,
and further goal pops yield the 2nd, 3rd, ... best loop-free paths.

The child key mixes through the extending edge: extending ``P`` (at ``i``)
with edge ``(i, j)`` scores ``sum_t (q_P * p_ij)(t) * u_j(T - t)``, i.e. the
prefix distribution is convolved with the edge before mixing with ``u_j``.

Searches are sequential; shared inputs (graph, policy) are immutable, so any
number of searches may run in parallel.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .distributions import DiscreteDistribution, convolve
from .errors import SearchBudgetExceeded
from .network import StochasticGraph
from .policy import PolicyTable

DEFAULT_QUEUE_LIMIT = 1_000_000


@dataclass(frozen=True)
class FoundPath:
    """One loop-free source-to-destination path with its exact reliability."""

    nodes: tuple
    edges: tuple[int, ...]
    reliability: float
    key_at_pop: float


@dataclass
class SearchReport:
    """Paths found plus the bookkeeping needed to audit the search.

    ``status`` is ``"found"``, ``"no_feasible_path"`` (the policy itself has
    zero success probability, so no path can succeed) or ``"unreachable"``
    (no directed connection at all).
    """

    paths: list[FoundPath]
    status: str
    popped: int = 0
    pushed: int = 0
    queue_peak: int = 0
    max_child_key_excess: float = float("-inf")
    final_queue_max_key: float | None = None
    wall_time: float = 0.0
    source: object = None
    budget: int = 0
    policy_bound: float = 0.0
    frontier: list = field(default_factory=list, repr=False)


def _directed_reachable(graph: StochasticGraph, s: int, d: int) -> bool:
    seen = {s}
    stack = [s]
    while stack:
        i = stack.pop()
        if i == d:
            return True
        for e in graph.out_edges[i]:
            j = int(graph.edge_heads[e])
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return False


def sota_path_report(
    graph: StochasticGraph,
    policy: PolicyTable,
    source,
    T: int | None = None,
    k: int = 1,
    edge_mask=None,
    queue_limit: int = DEFAULT_QUEUE_LIMIT,
    keep_frontier: bool = False,
    q_cap: int | None = None,
) -> SearchReport:
    """Best-first search for the ``k`` most reliable loop-free paths.

    ``policy`` must be computed toward the desired destination with a horizon
    of at least ``T``.  ``edge_mask`` optionally restricts the edge set (e.g.
    from activation-potential pruning).  ``queue_limit`` bounds memory;
    exceeding it raises :class:`SearchBudgetExceeded`.  ``q_cap`` widens the
    stored prefix distributions past ``T + 1`` bins so a kept frontier stays
    usable at larger budgets.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    T = policy.horizon if T is None else int(T)
    if T < 0 or T > policy.horizon:
        raise ValueError(f"budget {T} outside the policy horizon 0..{policy.horizon}")
    cap = T + 1 if q_cap is None else max(int(q_cap), T + 1)
    s = graph.node_index(source)
    d = graph.node_index(policy.dest)
    mask = None if edge_mask is None else np.asarray(edge_mask, dtype=bool)
    U = policy.u

    start = time.perf_counter()
    bound = float(U[s, T])
    report = SearchReport(paths=[], status="found", source=source, budget=T, policy_bound=bound)
    if bound <= 0.0:
        report.status = (
            "no_feasible_path" if _directed_reachable(graph, s, d) else "unreachable"
        )
        report.wall_time = time.perf_counter() - start
        return report

    # Heap entries: (-key, len(edges), node tuple, edge tuple, q mass array).
    # The first four fields are a total order over distinct paths, so the
    # non-comparable payload never gets compared.
    q0 = np.ones(1)
    heap = [(-bound, 0, (s,), (), q0)]
    report.pushed = 1
    report.queue_peak = 1

    while heap:
        neg_key, _, nodes, edges, qmass = heapq.heappop(heap)
        key = -neg_key
        report.popped += 1
        last = nodes[-1]

        if last == d:
            reliability = min(float(qmass[: T + 1].sum()), 1.0)
            report.paths.append(
                FoundPath(
                    nodes=tuple(graph.node_ids[i] for i in nodes),
                    edges=edges,
                    reliability=reliability,
                    key_at_pop=key,
                )
            )
            if len(report.paths) >= k:
                report.final_queue_max_key = -heap[0][0] if heap else None
                break
            continue

        for e in graph.out_edges[last]:
            if mask is not None and not mask[e]:
                continue
            j = int(graph.edge_heads[e])
            if j in nodes:
                continue  # loop-free paths only
            em = graph.edge_dists[e].mass
            child_q = np.convolve(qmass, em)[:cap]
            uj = U[j, T::-1]
            qk = child_q[: T + 1]
            child_key = float(np.dot(qk, uj[: len(qk)]))
            report.max_child_key_excess = max(report.max_child_key_excess, child_key - key)
            if child_key <= 0.0:
                continue
            heapq.heappush(heap, (-child_key, len(edges) + 1, nodes + (j,), edges + (int(e),), child_q))
            report.pushed += 1
        if len(heap) > queue_limit:
            raise SearchBudgetExceeded(
                f"path search exceeded the queue limit of {queue_limit} entries"
            )
        report.queue_peak = max(report.queue_peak, len(heap))

    if not report.paths:
        report.status = "no_feasible_path"
    if keep_frontier:
        report.frontier = [(entry[4], entry[2][-1]) for entry in heap]
    report.wall_time = time.perf_counter() - start
    return report


def sota_path(
    graph: StochasticGraph,
    policy: PolicyTable,
    source,
    T: int | None = None,
    k: int = 1,
    edge_mask=None,
    queue_limit: int = DEFAULT_QUEUE_LIMIT,
) -> list[FoundPath]:
    """The ``k`` most reliable loop-free paths, best first (may return fewer).

    Returns an empty list when no path can arrive on time within ``T``.
    """
    return sota_path_report(
        graph, policy, source, T=T, k=k, edge_mask=edge_mask, queue_limit=queue_limit
    ).paths


def _edges_for_node_path(graph: StochasticGraph, nodes) -> list[int]:
    edges = []
    for a, b in zip(nodes, nodes[1:]):
        candidates = graph.find_edges(a, b)
        if not candidates:
            raise ValueError(f"no edge connects {a!r} to {b!r}")
        if len(candidates) > 1:
            raise ValueError(
                f"parallel edges connect {a!r} to {b!r}; pass explicit edge indices"
            )
        edges.append(candidates[0])
    return edges


def path_distribution(graph: StochasticGraph, edges, cap: int | None = None) -> DiscreteDistribution:
    """Travel-time distribution of a concrete edge sequence."""
    dist = DiscreteDistribution.point_mass(0, dt=graph.dt)
    for e in edges:
        dist = convolve(dist, graph.edge_dists[int(e)], cap=cap)
    return dist


def path_reliability(graph: StochasticGraph, path, T: int, edges=None) -> float:
    """Exact on-time probability of a fixed path within ``T`` bins.

    ``path`` is a node sequence; when consecutive nodes are joined by parallel
    edges the edge sequence must be passed explicitly via ``edges``.
    """
    if T < 0:
        raise ValueError(f"budget must be nonnegative, got {T}")
    if edges is None:
        if path is None or len(path) == 0:
            raise ValueError("empty path")
        edges = _edges_for_node_path(graph, list(path))
    else:
        edges = [int(e) for e in edges]
        for a, b in zip(edges, edges[1:]):
            if graph.edge_heads[a] != graph.edge_tails[b]:
                raise ValueError(f"edges {a} and {b} are not consecutive")
    return path_distribution(graph, edges, cap=T + 1).cdf(T)


def brute_force_paths(
    graph: StochasticGraph, source, dest, T: int, max_nodes: int = 12
) -> list[FoundPath]:
    """Every loop-free path with its reliability, most reliable first.

    Exhaustive enumeration is exponential, so this refuses graphs larger than
    ``max_nodes``; it exists as the independent oracle for the guided search.
    Ties are ordered by shorter path, then lexicographic node sequence.
    """
    if graph.num_nodes > max_nodes:
        raise ValueError(
            f"graph has {graph.num_nodes} nodes; brute force is limited to {max_nodes}"
        )
    s, d = graph.node_index(source), graph.node_index(dest)
    results: list[FoundPath] = []
    nodes_path = [s]
    edges_path: list[int] = []
    on_path = {s}

    def visit():
        last = nodes_path[-1]
        if last == d and edges_path:
            dist = path_distribution(graph, edges_path, cap=T + 1)
            rel = dist.cdf(T)
            results.append(
                FoundPath(
                    nodes=tuple(graph.node_ids[i] for i in nodes_path),
                    edges=tuple(edges_path),
                    reliability=rel,
                    key_at_pop=rel,
                )
            )
            return
        for e in graph.out_edges[last]:
            j = int(graph.edge_heads[e])
            if j in on_path:
                continue
            nodes_path.append(j)
            edges_path.append(int(e))
            on_path.add(j)
            visit()
            on_path.discard(j)
            edges_path.pop()
            nodes_path.pop()

    if s == d:
        results.append(FoundPath(nodes=(graph.node_ids[s],), edges=(), reliability=1.0, key_at_pop=1.0))
    else:
        visit()
    results.sort(key=lambda p: (-p.reliability, len(p.edges), p.nodes))
    return results


def brute_force_best_path(
    graph: StochasticGraph, source, dest, T: int, max_nodes: int = 12
) -> FoundPath | None:
    """The most reliable loop-free path by exhaustive enumeration.

    Returns ``None`` when no path exists.  Ties resolve to the
    lexicographically smallest node sequence.
    """
    ranked = brute_force_paths(graph, source, dest, T, max_nodes=max_nodes)
    if not ranked:
        return None
    best = min(ranked, key=lambda p: (-p.reliability, p.nodes))
    return best
