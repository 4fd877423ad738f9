"""Realizability propagation, activation potentials, and pruning soundness."""

import random

import numpy as np
import pytest

import reliroute as rr
from reliroute.potentials import INFINITE_POTENTIAL

from conftest import edge_by_label, random_connected_graph


def marked_labels(graph, flags):
    return sorted(graph.edge_label(e) for e in np.nonzero(flags.edge_marked)[0])


class TestRealizability:
    def test_fixture_exact_budget(self, fixture_graph):
        g = fixture_graph
        pol = rr.compute_policy(g, "v3", 4, backend="direct")
        flags = rr.compute_realizability(g, pol, "v1")
        # Departing with exactly 4 bins, the only source decision is w(4).
        assert marked_labels(g, flags) == ["e2", "e4"]
        v2 = g.node_index("v2")
        assert np.nonzero(flags.reached[v2])[0].tolist() == [0, 1, 2, 3]

    def test_fixture_any_budget_marks_more(self, fixture_graph):
        g = fixture_graph
        pol = rr.compute_policy(g, "v3", 4, backend="direct")
        flags = rr.compute_realizability(g, pol, "v1", initial_budgets="any")
        # Departures with any budget <= 4 may also follow the w(3) choice.
        assert marked_labels(g, flags) == ["e2", "e3", "e4"]
        assert np.all(flags.reached[g.node_index("v1")])

    def test_source_equals_destination(self, fixture_graph):
        g = fixture_graph
        pol = rr.compute_policy(g, "v3", 4)
        flags = rr.compute_realizability(g, pol, "v3")
        assert not flags.edge_marked.any()
        assert flags.reached[g.node_index("v3"), 4]

    def test_matches_forward_oracle_on_randoms(self):
        rng = random.Random(1234)
        for _ in range(30):
            g, s, d = random_connected_graph(rng, max_nodes=10, max_extra_edges=16)
            T = rng.randint(0, 40)
            pol = rr.compute_policy(g, d, T)
            for mode in ("exact", "any"):
                flags = rr.compute_realizability(g, pol, s, initial_budgets=mode)
                oracle = rr.forward_reachability_oracle(g, pol, s, T, initial_budgets=mode)
                assert np.array_equal(flags.reached, oracle.reached)
                assert np.array_equal(flags.edge_marked, oracle.edge_marked)
                assert np.array_equal(flags.edge_first_budget, oracle.edge_first_budget)

    def test_convolution_backend_matches_bitset(self):
        rng = random.Random(88)
        for _ in range(15):
            g, s, d = random_connected_graph(rng, max_nodes=10, max_extra_edges=14)
            T = rng.randint(0, 40)
            pol = rr.compute_policy(g, d, T)
            a = rr.compute_realizability(g, pol, s, backend="bitset")
            b = rr.compute_realizability(g, pol, s, backend="convolution")
            assert np.array_equal(a.reached, b.reached)
            assert np.array_equal(a.edge_marked, b.edge_marked)

    def test_rollouts_stay_on_marked_edges(self, fixture_graph):
        g = fixture_graph
        pol = rr.compute_policy(g, "v3", 4)
        flags = rr.compute_realizability(g, pol, "v1")
        rng = random.Random(7)
        for _ in range(500):
            edges, _ = rr.rollout_policy(g, pol, "v1", 4, rng)
            assert all(flags.edge_marked[e] for e in edges)

    def test_convolution_backend_fft_path_on_coarse_blocks(self):
        # Long horizon + block update order makes entry spans and supports
        # large enough to hit the FFT branch.
        rng = np.random.default_rng(17)
        nodes = [(i, float(i), 0.0) for i in range(4)]
        edges = []
        for a, b in ((0, 1), (1, 2), (2, 3), (0, 2), (1, 3)):
            mass = np.zeros(200)
            lo = int(rng.integers(1, 40))
            mass[lo:] = rng.random(200 - lo)
            mass /= mass.sum()
            edges.append((a, b, rr.DiscreteDistribution(mass)))
        g = rr.StochasticGraph(1.0, nodes, edges)
        T = 400
        pol = rr.compute_policy(g, 3, T)
        order = rr.compute_update_order(g, 3, T, "dijkstra-blocks")
        assert any(hi - lo >= 64 for _, lo, hi in order.entries)
        a = rr.compute_realizability(g, pol, 0, order=order, backend="bitset")
        b = rr.compute_realizability(g, pol, 0, order=order, backend="convolution")
        assert np.array_equal(a.reached, b.reached)
        assert np.array_equal(a.edge_marked, b.edge_marked)

    def test_block_order_matches_time_sweep(self):
        rng = random.Random(44)
        for _ in range(10):
            g, s, d = random_connected_graph(rng, max_nodes=9, max_extra_edges=12)
            T = rng.randint(0, 30)
            pol = rr.compute_policy(g, d, T)
            order = rr.compute_update_order(g, d, T, "dijkstra-blocks")
            a = rr.compute_realizability(g, pol, s)
            b = rr.compute_realizability(g, pol, s, order=order)
            assert np.array_equal(a.reached, b.reached)
            assert np.array_equal(a.edge_marked, b.edge_marked)


@pytest.fixture(scope="module")
def fixture_region(fixture_graph):
    partition = rr.grid_partition(fixture_graph, 3)
    region = partition.region_of_index(fixture_graph.node_index("v3"))
    return partition, region


class TestArcPotentials:
    def test_fixture_activation_budgets(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(fixture_graph, partition, region, 6)
        expect = {"e4": 2, "e3": 3, "e2": 4, "e1": 5}
        for label, phi in expect.items():
            assert table.phi[edge_by_label(fixture_graph, label)] == phi

    def test_fixture_interval_form(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(
            fixture_graph, partition, region, 6, k_intervals=2
        )
        e2 = edge_by_label(fixture_graph, "e2")
        # The middle edge wins only at budget 4; from 5 on the slow-but-sure
        # edge evaluates higher (0.95 > 0.85).
        assert table.intervals[e2][0] == (4, 4)
        assert table.phi[e2] == 4
        e4 = edge_by_label(fixture_graph, "e4")
        assert table.intervals[e4] == ((2, 6),)

    def test_zero_horizon_all_infinite(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(fixture_graph, partition, region, 0)
        assert np.all(table.phi == INFINITE_POTENTIAL)

    def test_phi_is_infimum_of_intervals(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(
            fixture_graph, partition, region, 6, k_intervals=3
        )
        for e in range(fixture_graph.num_edges):
            if table.intervals[e]:
                assert table.phi[e] == table.intervals[e][0][0]
            else:
                assert table.phi[e] == INFINITE_POTENTIAL
            assert len(table.intervals[e]) <= 3

    def test_prune_fixture(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(fixture_graph, partition, region, 6)
        mask = rr.prune(fixture_graph, table, 4)
        kept = sorted(fixture_graph.edge_label(e) for e in np.nonzero(mask)[0])
        assert kept == ["e2", "e3", "e4"]
        assert not rr.prune(fixture_graph, table, 0).any()

    def test_prune_beyond_horizon_rejected(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(fixture_graph, partition, region, 6)
        with pytest.raises(ValueError, match="horizon"):
            rr.prune(fixture_graph, table, 7)

    def test_policy_accepts_pruning_pair(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(fixture_graph, partition, region, 6)
        pruned = rr.compute_policy(fixture_graph, "v3", 4, pruning=(table, 4))
        full = rr.compute_policy(fixture_graph, "v3", 4)
        # Budget-4 pruning drops only the never-active-by-4 edge; u is intact.
        assert np.abs(pruned.u - full.u).max() <= 1e-12
        v1 = fixture_graph.node_index("v1")
        assert pruned.w[v1, 4] == edge_by_label(fixture_graph, "e2")

    def test_path_mode_requires_sources(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        with pytest.raises(ValueError, match="source"):
            rr.compute_arc_potentials(fixture_graph, partition, region, 4, mode="path")

    def test_path_mode_fixture(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        table = rr.compute_arc_potentials(
            fixture_graph, partition, region, 6, mode="path", sources=["v1"]
        )
        # Optimal paths: budget 3 -> (e3, e4); 4 -> (e2, e4); 5+ -> (e1, e4).
        assert table.phi[edge_by_label(fixture_graph, "e4")] == 3
        assert table.phi[edge_by_label(fixture_graph, "e3")] == 3
        assert table.phi[edge_by_label(fixture_graph, "e2")] == 4
        assert table.phi[edge_by_label(fixture_graph, "e1")] == 5


def grid_instance(rng, k=5, T_cap=140):
    topology = rr.grid_topology(k)
    g = rr.synthesize_distributions(topology, seed=rng.randint(0, 10**6))
    inst = rr.generate_instances(g, 1, seed=rng.randint(0, 10**6))[0]
    return g, inst.source, inst.dest, min(inst.budget, T_cap)


class TestPruningSoundness:
    def test_policy_and_path_mode_preserve_values(self):
        rng = random.Random(50)
        for _ in range(6):
            g, s, d, T = grid_instance(rng, k=4)
            partition = rr.grid_partition(g, 2)
            region = partition.region_of_index(g.node_index(d))
            pol = rr.compute_policy(g, d, T)
            base = rr.sota_path(g, pol, s, T)
            base_rel = base[0].reliability if base else 0.0
            for mode, sources in (("policy", None), ("path", [s])):
                table = rr.compute_arc_potentials(
                    g, partition, region, T, mode=mode, sources=sources
                )
                mask = rr.prune(g, table, T)
                ppol = rr.compute_policy(g, d, T, edge_mask=mask)
                got = rr.sota_path(g, ppol, s, T, edge_mask=mask)
                got_rel = got[0].reliability if got else 0.0
                assert got_rel == pytest.approx(base_rel, abs=1e-12)
            # Policy values are preserved by policy-mode pruning.
            table = rr.compute_arc_potentials(g, partition, region, T, mode="policy")
            ppol = rr.compute_policy(g, d, T, edge_mask=rr.prune(g, table, T))
            assert abs(ppol.u[g.node_index(s), T] - pol.u[g.node_index(s), T]) <= 1e-12

    def test_path_mode_prunes_at_least_as_much(self):
        rng = random.Random(51)
        for _ in range(4):
            g, s, d, T = grid_instance(rng, k=4)
            partition = rr.grid_partition(g, 2)
            region = partition.region_of_index(g.node_index(d))
            pol_table = rr.compute_arc_potentials(g, partition, region, T, mode="policy")
            path_table = rr.compute_arc_potentials(
                g, partition, region, T, mode="path", sources=[s]
            )
            assert path_table.kept_count(T) <= pol_table.kept_count(T)

    def test_more_intervals_never_prune_fewer(self, fixture_graph, fixture_region):
        partition, region = fixture_region
        tables = [
            rr.compute_arc_potentials(fixture_graph, partition, region, 6, k_intervals=k)
            for k in (1, 2, 4)
        ]
        for budget in range(7):
            kept = [t.kept_count(budget) for t in tables]
            assert kept[0] >= kept[1] >= kept[2]

    def test_source_conditioned_policy_tables_prune_more(self):
        rng = random.Random(52)
        g, s, d, T = grid_instance(rng, k=4)
        partition = rr.grid_partition(g, 2)
        region = partition.region_of_index(g.node_index(d))
        free = rr.compute_arc_potentials(g, partition, region, T, mode="policy")
        conditioned = rr.compute_arc_potentials(
            g, partition, region, T, mode="policy", sources=[s]
        )
        assert conditioned.kept_count(T) <= free.kept_count(T)
        # Conditioned tables stay sound for queries from that source.
        mask = rr.prune(g, conditioned, T)
        pol = rr.compute_policy(g, d, T)
        ppol = rr.compute_policy(g, d, T, edge_mask=mask)
        base = rr.sota_path(g, pol, s, T)
        got = rr.sota_path(g, ppol, s, T, edge_mask=mask)
        assert (got[0].reliability if got else 0.0) == pytest.approx(
            base[0].reliability if base else 0.0, abs=1e-12
        )


class TestArchiveIO:
    def test_round_trip(self, fixture_graph, tmp_path):
        partition = rr.grid_partition(fixture_graph, 3)
        archive = rr.build_archive(fixture_graph, partition, 6, k_intervals=2)
        target = tmp_path / "potentials.json"
        rr.save_archive(archive, target)
        again = rr.load_archive(target)
        assert again["horizon"] == 6 and again["mode"] == "policy"
        assert np.array_equal(again["partition"].assignment, partition.assignment)
        for r, table in archive["tables"].items():
            loaded = again["tables"][r]
            assert np.array_equal(loaded.phi, table.phi)
            assert loaded.intervals == table.intervals
            assert np.array_equal(loaded.next_lb, table.next_lb)

    def test_reject_foreign_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        with pytest.raises(ValueError, match="archive"):
            rr.load_archive(bad)
