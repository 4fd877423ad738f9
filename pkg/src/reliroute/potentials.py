"""Search-space preprocessing: realizability flags and activation potentials.

An edge's *activation potential* for a destination region is the least time
budget at which the edge participates in an optimal solution toward some
destination in that region.  At query time, edges whose potential exceeds the
query budget can be dropped without changing any optimal value at or below
that budget.  Two flavours are computed:

- ``policy`` mode marks an edge active at budget ``t`` when it is the chosen
  successor ``w_i(t)`` of some policy toward a region destination (optionally
  intersected with realizability from a source side, which tightens the table
  for queries known to start there);
- ``path`` mode marks an edge active at ``t`` when it lies on an optimal
  fixed path at budget ``t`` from a given source toward a region destination.
  Optimal paths change rarely as the budget grows, so the sweep re-runs the
  search only when the incumbent path's optimality certificate fails.

*Realizability* answers which ``(node, remaining budget)`` states a traveller
following the optimal policy can actually occupy: flags propagate from the
source through the chosen successors, visiting states in the reverse of a
valid policy update order so every flag is final before it propagates.

Per-destination computations are independent; tables are immutable once
built.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .distributions import DiscreteDistribution, EXACT_TOL, reliability_curve
from .network import RegionPartition, StochasticGraph
from .policy import (
    NO_EDGE,
    PolicyTable,
    TIME_SWEEP,
    UpdateOrder,
    compute_policy,
    compute_update_order,
)
from .pathsearch import path_distribution, sota_path_report

#: Serializable stand-in for "never active within the horizon".
INFINITE_POTENTIAL = np.iinfo(np.int32).max


@dataclass
class RealizabilityFlags:
    """Which (node, remaining-budget) states the optimal policy can reach.

    ``reached[i, t]`` is True when node ``i`` can be occupied with ``t`` bins
    left; ``edge_marked[e]`` when edge ``e`` is traversed from some reachable
    state; ``edge_first_budget[e]`` is the smallest such budget (at the tail).
    """

    source: object
    horizon: int
    initial_budgets: str
    reached: np.ndarray
    edge_marked: np.ndarray
    edge_first_budget: np.ndarray


def compute_realizability(
    graph: StochasticGraph,
    policy: PolicyTable,
    source,
    T: int | None = None,
    order: UpdateOrder | None = None,
    initial_budgets: str = "exact",
    backend: str = "bitset",
) -> RealizabilityFlags:
    """Propagate reachable states from the source through the policy.

    ``initial_budgets`` selects the base case: ``"exact"`` seeds only the
    departure state ``(source, T)``, the right notion for a single query,
    while ``"any"`` seeds every budget ``0..T`` at the source, covering
    departures with any budget up to ``T`` (what a reusable pruning table
    needs).  ``source`` may be one node id or a list of them.

    ``backend="bitset"`` scatters boolean flags directly; ``"convolution"``
    ORs whole entries at once by convolving 0/1 indicators with each edge's
    support indicator; same output, better asymptotics for long horizons.
    """
    if initial_budgets not in ("exact", "any"):
        raise ValueError(f"unknown initial-budget mode {initial_budgets!r}")
    if backend not in ("bitset", "convolution"):
        raise ValueError(f"unknown realizability backend {backend!r}")
    T = policy.horizon if T is None else int(T)
    if T > policy.horizon:
        raise ValueError(f"horizon {T} exceeds the policy horizon {policy.horizon}")
    if order is None:
        order = compute_update_order(graph, policy.dest, T, TIME_SWEEP)
    if order.horizon < T:
        raise ValueError("update order does not cover the requested horizon")

    sources = source if isinstance(source, (list, tuple)) else [source]
    reached = np.zeros((graph.num_nodes, T + 1), dtype=bool)
    for s in sources:
        si = graph.node_index(s)
        if initial_budgets == "exact":
            reached[si, T] = True
        else:
            reached[si, :] = True

    edge_marked = np.zeros(graph.num_edges, dtype=bool)
    edge_first = np.full(graph.num_edges, INFINITE_POTENTIAL, dtype=np.int64)
    supports = [np.nonzero(d.mass)[0] for d in graph.edge_dists]
    has_self_loop = any(
        graph.edge_tails[e] == graph.edge_heads[e] for e in range(graph.num_edges)
    )
    W = policy.w

    for i, lo, hi in reversed(order.entries):
        hi = min(hi, T)
        if hi < lo:
            continue
        row = reached[i, lo : hi + 1]
        if has_self_loop:
            # Self-loops can propagate within the entry; go bin by bin.
            for t in range(hi, lo - 1, -1):
                if not reached[i, t]:
                    continue
                e = int(W[i, t])
                if e == NO_EDGE:
                    continue
                j = int(graph.edge_heads[e])
                taus = supports[e]
                taus = taus[taus <= t]
                if taus.size:
                    reached[j, t - taus] = True
                edge_marked[e] = True
                edge_first[e] = min(edge_first[e], t)
            continue
        active = np.nonzero(row & (W[i, lo : hi + 1] != NO_EDGE))[0]
        if active.size == 0:
            continue
        ts = active + lo
        for e in np.unique(W[i, ts]):
            e = int(e)
            te = ts[W[i, ts] == e]
            j = int(graph.edge_heads[e])
            edge_marked[e] = True
            edge_first[e] = min(edge_first[e], int(te.min()))
            if backend == "bitset":
                taus = supports[e]
                landing = te[:, None] - taus[None, :]
                landing = landing[landing >= 0]
                reached[j, landing] = True
            else:
                _convolution_or(reached, j, te, supports[e], T)

    return RealizabilityFlags(
        source=source,
        horizon=T,
        initial_budgets=initial_budgets,
        reached=reached,
        edge_marked=edge_marked,
        edge_first_budget=edge_first,
    )


def _convolution_or(reached, j, ts, taus, T):
    """OR ``reached[j, t - tau]`` for all fed ``t`` and support ``tau`` via a
    numeric convolution of indicator vectors (FFT above a size threshold, so
    coarse update-order entries cost near-linearithmic time)."""
    lo, hi = int(ts.min()), int(ts.max())
    x = np.zeros(hi - lo + 1)
    x[ts - lo] = 1.0
    tau_max = int(taus.max())
    kern = np.zeros(tau_max - int(taus.min()) + 1)
    kern[tau_max - taus] = 1.0  # kern[b] = indicator(tau = tau_max - b)
    if min(len(x), len(kern)) >= 64:
        hits = signal.fftconvolve(x, kern)
    else:
        hits = np.convolve(x, kern)
    # index r corresponds to budget r + lo - tau_max
    budgets = np.nonzero(hits > 0.5)[0] + lo - tau_max
    budgets = budgets[(budgets >= 0) & (budgets <= T)]
    reached[j, budgets] = True


def forward_reachability_oracle(
    graph: StochasticGraph, policy: PolicyTable, source, T: int, initial_budgets: str = "exact"
) -> RealizabilityFlags:
    """Independent forward BFS over (node, budget) states; the test oracle."""
    reached = np.zeros((graph.num_nodes, T + 1), dtype=bool)
    edge_marked = np.zeros(graph.num_edges, dtype=bool)
    edge_first = np.full(graph.num_edges, INFINITE_POTENTIAL, dtype=np.int64)
    sources = source if isinstance(source, (list, tuple)) else [source]
    stack = []
    for s in sources:
        si = graph.node_index(s)
        budgets = [T] if initial_budgets == "exact" else list(range(T + 1))
        for t in budgets:
            if not reached[si, t]:
                reached[si, t] = True
                stack.append((si, t))
    while stack:
        i, t = stack.pop()
        e = int(policy.w[i, t])
        if e == NO_EDGE:
            continue
        edge_marked[e] = True
        edge_first[e] = min(edge_first[e], t)
        j = int(graph.edge_heads[e])
        for tau in np.nonzero(graph.edge_dists[e].mass)[0]:
            t2 = t - int(tau)
            if t2 >= 0 and not reached[j, t2]:
                reached[j, t2] = True
                stack.append((j, t2))
    return RealizabilityFlags(source, T, initial_budgets, reached, edge_marked, edge_first)


def rollout_policy(graph: StochasticGraph, policy: PolicyTable, source, T: int, rng):
    """Simulate one trip following the policy from ``(source, T)``.

    Returns ``(edges traversed, arrived on time)``.  The traveller commits to
    the policy's edge before its travel time realizes; a trip that overruns
    the budget stops at the next node.
    """
    i = graph.node_index(source)
    d = graph.node_index(policy.dest)
    t = T
    edges = []
    while i != d:
        if t < 0:
            return edges, False
        e = int(policy.w[i, t])
        if e == NO_EDGE:
            return edges, False
        edges.append(e)
        mass = graph.edge_dists[e].mass
        tau = int(rng.choices(range(len(mass)), weights=mass)[0])
        t -= tau
        i = int(graph.edge_heads[e])
    return edges, t >= 0


# ---------------------------------------------------------------------------
# activation potentials


@dataclass
class PotentialTable:
    """Per-edge activation budgets toward one destination region.

    ``phi[e]`` is the least budget at which edge ``e`` becomes active
    (``INFINITE_POTENTIAL`` when it never does within the horizon).  With
    ``k_intervals > 1`` the lowest activation intervals are stored as well,
    plus ``next_lb[e]``, a lower bound on any further activation (``horizon +
    1`` when no more activity was seen).  ``phi`` always equals the start of
    the first stored interval.
    """

    region: int
    horizon: int
    dt: float
    mode: str
    k_intervals: int
    phi: np.ndarray
    intervals: tuple
    next_lb: np.ndarray
    sources: tuple | None = None
    region_nodes: tuple = field(default_factory=tuple, repr=False)

    def edge_mask(self, budget: int) -> np.ndarray:
        """Edges that may participate in any optimal solution at ``<= budget``."""
        if budget < 0:
            raise ValueError(f"budget must be nonnegative, got {budget}")
        if budget > self.horizon:
            raise ValueError(
                f"budget {budget} exceeds the preprocessed horizon {self.horizon}; "
                "potentials beyond the horizon are unknown"
            )
        return self.phi <= budget

    def kept_count(self, budget: int) -> int:
        return int(self.edge_mask(budget).sum())


def prune(graph: StochasticGraph, table: PotentialTable, budget: int) -> np.ndarray:
    """Boolean keep-mask over the graph's edges for a query at ``budget``.

    An edge survives iff its activation potential is at most the budget
    (interval form: iff some stored interval starts at or below the budget,
    or the recorded bound admits activity there, which reduces to the same
    test because the first interval starts at ``phi``).  Optimal values on
    the masked graph match the full graph for destinations in the table's
    region and budgets up to the horizon.
    """
    if len(table.phi) != graph.num_edges:
        raise ValueError("potential table does not match this graph's edge count")
    return table.edge_mask(budget)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of consecutive True bins as (first, last) pairs."""
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    breaks = np.nonzero(np.diff(idx) > 1)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [idx.size - 1]])
    return [(int(idx[a]), int(idx[b])) for a, b in zip(starts, ends)]


def _activity_policy_mode(graph, region_nodes, T, backend, sources):
    activity = np.zeros((graph.num_edges, T + 1), dtype=bool)
    for d_idx in region_nodes:
        pol = compute_policy(graph, graph.node_ids[d_idx], T, backend=backend)
        valid = pol.w != NO_EDGE
        if sources is not None:
            flags = compute_realizability(
                graph, pol, list(sources), T, initial_budgets="any"
            )
            valid &= flags.reached
        nodes_t = np.nonzero(valid)
        activity[pol.w[valid], nodes_t[1]] = True
    return activity


def _activity_path_mode(graph, region_nodes, T, backend, sources):
    activity = np.zeros((graph.num_edges, T + 1), dtype=bool)
    for d_idx in region_nodes:
        dest = graph.node_ids[d_idx]
        pol = compute_policy(graph, dest, T, backend=backend)
        for s in sources:
            s_idx = graph.node_index(s)
            if s_idx == d_idx:
                continue
            u_s = pol.u[s_idx]
            incumbent_edges = None
            incumbent_rel = None  # incumbent's reliability at every budget
            frontier_bound = None  # upper bound on every other path, per budget
            for t in range(T + 1):
                if u_s[t] <= 0.0:
                    continue
                stale = (
                    incumbent_edges is None
                    or incumbent_rel[t] < frontier_bound[t] - EXACT_TOL
                )
                if stale:
                    # Prefix distributions are kept to the full horizon so the
                    # frontier keys stay exact at later budgets.
                    rep = sota_path_report(
                        graph, pol, s, T=t, k=1, keep_frontier=True, q_cap=T + 1
                    )
                    if not rep.paths:
                        continue
                    incumbent_edges = rep.paths[0].edges
                    q = path_distribution(graph, incumbent_edges, cap=T + 1)
                    incumbent_rel = np.zeros(T + 1)
                    c = q.cdf_array()
                    incumbent_rel[: len(c)] = c
                    if len(c) and len(c) <= T:
                        incumbent_rel[len(c):] = c[-1]
                    frontier_bound = np.zeros(T + 1)
                    for qmass, last in rep.frontier:
                        qd = DiscreteDistribution(
                            qmass, dt=graph.dt, truncated_tail=max(1.0 - qmass.sum(), 0.0)
                        )
                        curve = reliability_curve(qd, pol.u[last], T)
                        np.maximum(frontier_bound, curve, out=frontier_bound)
                if incumbent_edges and incumbent_rel[t] > 0.0:
                    activity[list(incumbent_edges), t] = True
    return activity


def compute_arc_potentials(
    graph: StochasticGraph,
    partition: RegionPartition,
    region: int,
    T: int,
    mode: str = "policy",
    k_intervals: int = 1,
    sources=None,
    backend: str = "zdc",
) -> PotentialTable:
    """Activation potentials for all edges toward one destination region.

    ``mode="policy"`` derives activity from the optimal policies toward every
    destination in the region (``sources`` optionally conditions on
    realizability from those nodes, shrinking the table to trips that can
    actually start there).  ``mode="path"`` requires ``sources`` and derives
    activity from optimal fixed paths, sweeping every budget and re-running
    the search only when the incumbent's certificate fails; it prunes far
    harder but is only valid for path queries from those sources.

    With ``k_intervals > 1`` the lowest activation intervals are recorded in
    addition to the minimum.
    """
    if T < 0:
        raise ValueError(f"horizon must be nonnegative, got {T}")
    if not 0 <= region < partition.region_count:
        raise ValueError(f"region {region} out of range 0..{partition.region_count - 1}")
    if k_intervals < 1:
        raise ValueError("k_intervals must be at least 1")
    if mode not in ("policy", "path"):
        raise ValueError(f"unknown mode {mode!r}")
    if sources is not None and not isinstance(sources, (list, tuple)):
        sources = [sources]

    region_nodes = partition.regions[region]
    if mode == "policy":
        activity = _activity_policy_mode(graph, region_nodes, T, backend, sources)
    else:
        if not sources:
            raise ValueError("path-mode potentials require one or more source nodes")
        activity = _activity_path_mode(graph, region_nodes, T, backend, sources)

    phi = np.full(graph.num_edges, INFINITE_POTENTIAL, dtype=np.int64)
    intervals = []
    next_lb = np.full(graph.num_edges, T + 1, dtype=np.int64)
    for e in range(graph.num_edges):
        runs = _runs(activity[e])
        if runs:
            phi[e] = runs[0][0]
        stored = tuple(runs[:k_intervals])
        intervals.append(stored)
        if len(runs) > k_intervals:
            next_lb[e] = runs[k_intervals][0]
    return PotentialTable(
        region=region,
        horizon=T,
        dt=graph.dt,
        mode=mode,
        k_intervals=k_intervals,
        phi=phi,
        intervals=tuple(intervals),
        next_lb=next_lb,
        sources=tuple(sources) if sources is not None else None,
        region_nodes=tuple(int(i) for i in region_nodes),
    )


# ---------------------------------------------------------------------------
# archive: one file holding the tables for every region of a partition


def build_archive(
    graph: StochasticGraph,
    partition: RegionPartition,
    T: int,
    mode: str = "policy",
    k_intervals: int = 1,
    sources=None,
    regions=None,
    backend: str = "zdc",
) -> dict:
    """Compute tables for several regions; returns ``{region: PotentialTable}``
    plus the partition, bundled for serialization."""
    chosen = range(partition.region_count) if regions is None else regions
    tables = {
        int(r): compute_arc_potentials(
            graph, partition, int(r), T, mode=mode, k_intervals=k_intervals,
            sources=sources, backend=backend,
        )
        for r in chosen
    }
    return {"partition": partition, "tables": tables, "horizon": T, "mode": mode,
            "k_intervals": k_intervals, "dt": graph.dt}


def save_archive(archive: dict, target) -> None:
    """Write an archive as versioned JSON (infinite potentials become null)."""
    tables = {}
    for r, tab in archive["tables"].items():
        tables[str(r)] = {
            "phi": [None if p >= INFINITE_POTENTIAL else int(p) for p in tab.phi],
            "intervals": [[list(iv) for iv in edge_ivs] for edge_ivs in tab.intervals],
            "next_lb": [int(x) for x in tab.next_lb],
            "sources": list(tab.sources) if tab.sources is not None else None,
            "region_nodes": list(tab.region_nodes),
        }
    doc = {
        "format": "reliroute-potentials",
        "version": 1,
        "region_count": archive["partition"].region_count,
        "horizon": archive["horizon"],
        "dt": archive["dt"],
        "mode": archive["mode"],
        "k_intervals": archive["k_intervals"],
        "assignment": [int(r) for r in archive["partition"].assignment],
        "tables": tables,
    }
    Path(target).write_text(json.dumps(doc))


def load_archive(source) -> dict:
    doc = json.loads(Path(source).read_text())
    if doc.get("format") != "reliroute-potentials" or doc.get("version") != 1:
        raise ValueError("not a recognized potentials archive")
    partition = RegionPartition(np.array(doc["assignment"], dtype=np.int64))
    tables = {}
    for r, tab in doc["tables"].items():
        phi = np.array(
            [INFINITE_POTENTIAL if p is None else p for p in tab["phi"]], dtype=np.int64
        )
        tables[int(r)] = PotentialTable(
            region=int(r),
            horizon=int(doc["horizon"]),
            dt=float(doc["dt"]),
            mode=doc["mode"],
            k_intervals=int(doc["k_intervals"]),
            phi=phi,
            intervals=tuple(tuple(tuple(iv) for iv in edge_ivs) for edge_ivs in tab["intervals"]),
            next_lb=np.array(tab["next_lb"], dtype=np.int64),
            sources=tuple(tab["sources"]) if tab["sources"] is not None else None,
            region_nodes=tuple(tab["region_nodes"]),
        )
    return {
        "partition": partition,
        "tables": tables,
        "horizon": int(doc["horizon"]),
        "mode": doc["mode"],
        "k_intervals": int(doc["k_intervals"]),
        "dt": float(doc["dt"]),
    }
