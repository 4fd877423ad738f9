"""Parametric travel-time models discretized onto the time grid.

Continuous delay distributions are mapped to bins by rounding each outcome to
the nearest grid point: delay bin ``j`` receives the probability of the
interval ``((j - 1/2) dt, (j + 1/2) dt]``.  This keeps the discretized mean
within half a bin of the continuous mean and, crucially, keeps the free-flow
time itself reachable, so an edge's minimum travel time lands exactly at
``ceil(free_flow / dt)`` bins.

Residual mass past the cutoff quantile is folded into the last bin so every
generated PMF sums to one exactly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special, stats

from .distributions import DiscreteDistribution

#: Upper-tail probability at which generated supports are cut off.
TAIL_EPS = 1e-12


def free_flow_bins(free_flow_seconds: float, dt: float) -> int:
    """Minimum-travel-time bin for a free-flow time, rounded up to the grid."""
    if free_flow_seconds <= 0:
        raise ValueError(f"free-flow time must be positive, got {free_flow_seconds}")
    if free_flow_seconds < dt * (1.0 - 1e-9):
        raise ValueError(
            f"free-flow time {free_flow_seconds:.6g}s is below one time bin "
            f"(dt={dt:.6g}s); decrease dt so that dt <= minimum travel time"
        )
    return max(1, math.ceil(free_flow_seconds / dt - 1e-9))


def _fold_residual(pmf: np.ndarray) -> np.ndarray:
    residual = 1.0 - pmf.sum()
    pmf[-1] += residual
    return pmf


def shifted_gamma_pmf(
    min_bin: int, mean_delay: float, cov: float, dt: float = 1.0
) -> DiscreteDistribution:
    """Gamma-distributed delay on top of a deterministic minimum travel time.

    ``mean_delay`` is the expected extra time in seconds beyond the minimum;
    ``cov`` is its coefficient of variation.  ``cov == 0`` or a zero delay
    degenerates to a point mass at ``min_bin``.
    """
    if min_bin < 1:
        raise ValueError("edge distributions must have their minimum travel time at bin 1 or later")
    if mean_delay < 0:
        raise ValueError(f"mean delay must be nonnegative, got {mean_delay}")
    if cov < 0:
        raise ValueError(f"coefficient of variation must be nonnegative, got {cov}")
    if mean_delay == 0.0 or cov == 0.0:
        dist = DiscreteDistribution.point_mass(min_bin, dt=dt)
        if mean_delay > 0:
            # Deterministic delay still shifts the point mass.
            dist = DiscreteDistribution.point_mass(
                min_bin + int(round(mean_delay / dt)), dt=dt
            )
        return dist

    shape = 1.0 / (cov * cov)
    scale = mean_delay * cov * cov
    last = int(math.ceil(stats.gamma.ppf(1.0 - TAIL_EPS, shape, scale=scale) / dt)) + 1
    edges = (np.arange(last + 1) + 0.5) * dt
    cdf = special.gammainc(shape, edges / scale)
    pmf = np.empty(last + 1)
    pmf[0] = cdf[0]
    pmf[1:] = np.diff(cdf)
    _fold_residual(pmf)
    full = np.zeros(min_bin + last + 1)
    full[min_bin:] = pmf
    return DiscreteDistribution(full, dt=dt)


def gaussian_mixture_pmf(
    components: list[dict], dt: float = 1.0, min_seconds: float | None = None
) -> DiscreteDistribution:
    """Discretized Gaussian mixture over absolute travel times.

    Each component is ``{"weight": w, "mean": seconds, "std": seconds}``.
    Mass below the physical floor (``min_seconds``, default one bin) is folded
    into the floor bin so the result respects the minimum-travel-time rule.
    """
    if not components:
        raise ValueError("mixture must have at least one component")
    weights = np.array([float(c["weight"]) for c in components])
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    floor = dt if min_seconds is None else float(min_seconds)
    floor_bin = free_flow_bins(floor, dt)
    last = max(
        floor_bin + 1,
        int(math.ceil(max(float(c["mean"]) + 9.0 * float(c["std"]) for c in components) / dt)),
    )
    edges = (np.arange(floor_bin, last + 1) + 0.5) * dt
    cdf = np.zeros(len(edges))
    for c, w in zip(components, weights):
        std = float(c["std"])
        if std <= 0:
            raise ValueError("mixture component std must be positive")
        cdf += w * special.ndtr((edges - float(c["mean"])) / std)
    pmf = np.empty(len(edges))
    pmf[0] = cdf[0]  # everything at or below the floor bin
    pmf[1:] = np.diff(cdf)
    _fold_residual(pmf)
    full = np.zeros(last + 1)
    full[floor_bin:] = pmf
    return DiscreteDistribution(full, dt=dt)


def resolve_distribution_literal(literal: dict, dt: float) -> DiscreteDistribution:
    """Turn a distribution literal from an input file into a PMF.

    Accepted forms::

        {"pmf": [[bin, prob], ...]}                      # optionally with "dt"
        {"model": "histogram", "pmf": [[bin, prob], ...]}
        {"model": "shifted-gamma", "shift": s, "mean_delay": s, "cov": c}
        {"model": "discretized-gaussian-mixture",
         "components": [{"weight": w, "mean": s, "std": s}, ...],
         "min_seconds": s}
    """
    if not isinstance(literal, dict):
        raise ValueError(f"distribution literal must be an object, got {type(literal).__name__}")
    if "dt" in literal and float(literal["dt"]) != dt:
        raise ValueError(
            f"distribution dt {literal['dt']} does not match the graph time step {dt}"
        )
    model = literal.get("model", "histogram" if "pmf" in literal else None)
    if model == "histogram":
        if "pmf" not in literal:
            raise ValueError("histogram literal requires a 'pmf' list")
        return DiscreteDistribution.from_pairs(literal["pmf"], dt=dt)
    if model == "shifted-gamma":
        shift = float(literal["shift"])
        return shifted_gamma_pmf(
            free_flow_bins(shift, dt),
            float(literal.get("mean_delay", 0.0)),
            float(literal.get("cov", 1.0)),
            dt=dt,
        )
    if model == "discretized-gaussian-mixture":
        return gaussian_mixture_pmf(
            literal["components"], dt=dt, min_seconds=literal.get("min_seconds")
        )
    raise ValueError(f"unknown distribution literal: {literal!r}")
