"""Command-line interface.

Subcommands mirror the library pipeline: ``synth`` writes a synthetic network
file, ``policy`` solves and optionally exports an arrival-probability table,
``path`` answers a most-reliable-path query as JSON, ``preprocess`` builds an
activation-potential archive, and ``bench`` runs the timing study.
Budgets and horizons are given in time bins (seconds when dt = 1).
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .harness import BenchmarkConfig, generate_instances, run_benchmark, summarize
from .network import grid_partition, load_graph, save_graph
from .pathsearch import sota_path_report
from .policy import compute_policy
from .potentials import build_archive, load_archive, prune, save_archive
from .synth import grid_topology, synthesize_distributions


@click.group()
def main():
    """Reliability routing on stochastic networks."""


def _load(graph_path):
    try:
        return load_graph(Path(graph_path))
    except Exception as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--grid", "grid_k", type=int, required=True, help="Lattice dimension (k x k).")
@click.option("--dt", type=float, default=1.0, show_default=True)
@click.option("--spacing", type=float, default=100.0, show_default=True, help="Edge length in metres.")
@click.option("--speed", type=float, default=10.0, show_default=True, help="Speed limit in m/s.")
@click.option("--cov", type=float, default=1.0, show_default=True, help="Delay coefficient of variation.")
@click.option("--delay-factor", type=float, default=0.5, show_default=True,
              help="Mean delay as a fraction of free-flow time.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def synth(grid_k, dt, spacing, speed, cov, delay_factor, seed, out_path):
    """Generate a synthetic grid network with gamma-delay travel times."""
    topology = grid_topology(grid_k, spacing=spacing, speed=speed, dt=dt)
    model = {"name": "shifted-gamma", "cov": cov, "delay_factor": delay_factor, "randomize": True}
    graph = synthesize_distributions(topology, model, seed=seed)
    save_graph(graph, out_path)
    click.echo(f"wrote {graph.num_nodes} nodes / {graph.num_edges} edges to {out_path}")


@main.command()
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--dest", required=True)
@click.option("--budget", type=int, required=True)
@click.option("--backend", type=click.Choice(["zdc", "direct"]), default="zdc", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Export the table (.json or .npz).")
def policy(graph_path, dest, budget, backend, out_path):
    """Compute the arrival-probability policy toward a destination."""
    graph = _load(graph_path)
    t0 = time.perf_counter()
    table = compute_policy(graph, _coerce_id(graph, dest), budget, backend=backend)
    wall = time.perf_counter() - t0
    if out_path:
        table.save(out_path)
    summary = {
        "dest": table.dest,
        "budget": budget,
        "dt": graph.dt,
        "backend": backend,
        "wall_time": wall,
        "nodes_with_positive_u": int((table.u[:, budget] > 0).sum()),
    }
    if graph.num_nodes <= 64:
        summary["u_at_budget"] = {
            str(nid): float(table.u[i, budget]) for i, nid in enumerate(graph.node_ids)
        }
    click.echo(json.dumps(summary, indent=1))


def _coerce_id(graph, raw):
    """CLI node arguments arrive as strings; match integer ids too."""
    if graph.has_node(raw):
        return raw
    try:
        as_int = int(raw)
    except ValueError:
        return raw
    return as_int if graph.has_node(as_int) else raw


@main.command(name="path")
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--source", required=True)
@click.option("--dest", required=True)
@click.option("--budget", type=int, required=True)
@click.option("--k", type=int, default=1, show_default=True, help="Number of ranked paths.")
@click.option("--backend", type=click.Choice(["zdc", "direct"]), default="zdc", show_default=True)
@click.option("--potentials", "pot_path", type=click.Path(exists=True), default=None,
              help="Activation-potential archive for pruning.")
def path_cmd(graph_path, source, dest, budget, k, backend, pot_path):
    """Find the most reliable path(s) within a time budget."""
    graph = _load(graph_path)
    source, dest = _coerce_id(graph, source), _coerce_id(graph, dest)
    mask = None
    if pot_path:
        archive = load_archive(pot_path)
        region = archive["partition"].region_of_index(graph.node_index(dest))
        if region not in archive["tables"]:
            raise click.ClickException(f"archive has no table for region {region}")
        mask = prune(graph, archive["tables"][region], budget)
    t0 = time.perf_counter()
    table = compute_policy(graph, dest, budget, backend=backend, edge_mask=mask)
    report = sota_path_report(graph, table, source, T=budget, k=k, edge_mask=mask)
    wall = time.perf_counter() - t0
    best = report.paths[0] if report.paths else None
    out = {
        "source": source,
        "dest": dest,
        "budget": budget,
        "status": report.status,
        "path": list(best.nodes) if best else [],
        "edges": [graph.edge_label(e) for e in best.edges] if best else [],
        "reliability": best.reliability if best else 0.0,
        "popped_count": report.popped,
        "queue_peak": report.queue_peak,
        "wall_time": wall,
    }
    if k > 1:
        out["ranked"] = [
            {"path": list(p.nodes), "edges": [graph.edge_label(e) for e in p.edges],
             "reliability": p.reliability}
            for p in report.paths
        ]
    if mask is not None:
        out["kept_edges"] = int(mask.sum())
    click.echo(json.dumps(out, indent=1))


@main.command()
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--grid", "grid_k", type=int, required=True, help="Partition dimension (k x k regions).")
@click.option("--horizon", type=int, required=True)
@click.option("--mode", type=click.Choice(["policy", "path"]), default="policy", show_default=True)
@click.option("--intervals", "k_intervals", type=int, default=1, show_default=True)
@click.option("--source", "sources", multiple=True,
              help="Source node(s); required for path mode, optional conditioning for policy mode.")
@click.option("--region", "regions", multiple=True, type=int,
              help="Limit to specific region ids (default: all).")
@click.option("--backend", type=click.Choice(["zdc", "direct"]), default="zdc", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def preprocess(graph_path, grid_k, horizon, mode, k_intervals, sources, regions, backend, out_path):
    """Build an activation-potential archive for query pruning."""
    graph = _load(graph_path)
    partition = grid_partition(graph, grid_k)
    src = [_coerce_id(graph, s) for s in sources] or None
    if mode == "path" and not src:
        raise click.ClickException("path mode requires at least one --source")
    archive = build_archive(
        graph, partition, horizon, mode=mode, k_intervals=k_intervals,
        sources=src, regions=list(regions) or None, backend=backend,
    )
    save_archive(archive, out_path)
    kept = {r: tab.kept_count(horizon) for r, tab in archive["tables"].items()}
    click.echo(
        json.dumps(
            {"regions": partition.region_count, "horizon": horizon, "mode": mode,
             "kept_at_horizon": kept, "out": str(out_path)},
            indent=1,
        )
    )


@main.command()
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--instances", "n_instances", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid", "grid_k", type=int, default=None, help="Region grid for pruning runs.")
@click.option("--preprocess", "pruning", type=click.Choice(["policy", "path"]), default=None,
              help="Also run each instance with this pruning mode.")
@click.option("--backend", type=click.Choice(["zdc", "direct"]), default="zdc", show_default=True)
@click.option("--repetitions", type=int, default=3, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def bench(graph_path, n_instances, seed, grid_k, pruning, backend, repetitions, workers, out_dir):
    """Run the timing study; writes records.csv and plot data."""
    graph = _load(graph_path)
    instances = generate_instances(graph, n_instances, seed=seed)
    config = BenchmarkConfig(
        backend=backend, repetitions=repetitions, pruning=pruning,
        grid_k=grid_k, workers=workers,
    )
    records = run_benchmark(graph, instances, config=config, out_dir=out_dir)
    click.echo(json.dumps(summarize(records), indent=1))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
