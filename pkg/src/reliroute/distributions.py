"""Probability mass functions for travel times on a uniform time grid.

Time is discretized into bins of ``dt`` seconds.  A :class:`DiscreteDistribution`
stores a dense array ``mass`` where ``mass[k]`` is the probability that the
travel time equals ``k * dt``.  Dense storage (rather than sparse pairs) keeps
the inner loops of the dynamic program and of path evaluation predictable,
since those loops touch nearly every bin anyway.

Probability that would fall at or beyond a convolution cap is never silently
dropped: it is accumulated into ``truncated_tail`` so total mass remains
auditable.  The tail's exact bin positions are not recorded, only that they
lie past the stored support.

Instances are immutable after construction and safe to share between threads.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

#: Slack allowed when checking that probabilities sum to one.
NORMALIZATION_TOL = 1e-9

#: Tolerance used by exact-equality oracles (e.g. streaming vs direct convolution).
EXACT_TOL = 1e-12


def _as_mass_array(mass) -> np.ndarray:
    arr = np.asarray(mass, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("mass must be a 1-D array of probabilities per bin")
    return arr


class DiscreteDistribution:
    """An immutable PMF on integer time bins.

    Parameters
    ----------
    mass:
        Probability per bin, indexed from bin 0.  Trailing zero bins are
        trimmed; leading zeros are kept because bin indices are absolute.
    dt:
        Bin width in seconds.
    truncated_tail:
        Probability mass known to lie at bins past ``len(mass)`` (produced by
        capped convolutions).  ``sum(mass) + truncated_tail`` must be 1 within
        ``NORMALIZATION_TOL``.
    """

    __slots__ = ("dt", "mass", "truncated_tail", "min_bin", "_cdf")

    def __init__(self, mass, dt: float = 1.0, truncated_tail: float = 0.0):
        arr = _as_mass_array(mass).copy()
        if not (dt > 0.0):
            raise ValueError(f"dt must be positive, got {dt}")
        if truncated_tail < -EXACT_TOL:
            raise ValueError(f"truncated_tail must be nonnegative, got {truncated_tail}")
        lowest = arr.min(initial=0.0)
        if lowest < -EXACT_TOL:
            raise ValueError(f"negative probability {lowest} in mass array")
        np.clip(arr, 0.0, None, out=arr)
        nonzero = np.nonzero(arr)[0]
        arr = arr[: int(nonzero[-1]) + 1] if nonzero.size else arr[:0]

        tail = max(float(truncated_tail), 0.0)
        total = float(arr.sum()) + tail
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(
                f"probability mass sums to {total!r}; expected 1 within {NORMALIZATION_TOL} "
                "(including any truncated tail)"
            )

        arr.setflags(write=False)
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "mass", arr)
        object.__setattr__(self, "truncated_tail", tail)
        object.__setattr__(self, "min_bin", int(nonzero[0]) if nonzero.size else None)
        object.__setattr__(self, "_cdf", None)

    def __setattr__(self, name, value):  # pragma: no cover - guard only
        raise AttributeError("DiscreteDistribution is immutable")

    def __getstate__(self):
        return {
            "dt": self.dt,
            "mass": np.asarray(self.mass),
            "truncated_tail": self.truncated_tail,
        }

    def __setstate__(self, state):
        fresh = DiscreteDistribution(
            state["mass"], dt=state["dt"], truncated_tail=state["truncated_tail"]
        )
        for slot in self.__slots__:
            object.__setattr__(self, slot, getattr(fresh, slot))

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence], dt: float = 1.0) -> "DiscreteDistribution":
        """Build from ``[(bin, probability), ...]`` pairs.

        Bins must be nonnegative integers and must not repeat.
        """
        pairs = list(pairs)
        if not pairs:
            raise ValueError("empty PMF")
        bins = []
        for entry in pairs:
            k, p = entry
            if int(k) != k or k < 0:
                raise ValueError(f"bin index must be a nonnegative integer, got {k!r}")
            bins.append(int(k))
        if len(set(bins)) != len(bins):
            raise ValueError("duplicate bin index in PMF pairs")
        arr = np.zeros(max(bins) + 1, dtype=np.float64)
        for (k, p), b in zip(pairs, bins):
            arr[b] = float(p)
        return cls(arr, dt=dt)

    @classmethod
    def point_mass(cls, at_bin: int, dt: float = 1.0) -> "DiscreteDistribution":
        """A deterministic travel time of exactly ``at_bin`` bins."""
        if int(at_bin) != at_bin or at_bin < 0:
            raise ValueError(f"bin index must be a nonnegative integer, got {at_bin!r}")
        arr = np.zeros(int(at_bin) + 1, dtype=np.float64)
        arr[int(at_bin)] = 1.0
        return cls(arr, dt=dt)

    # -- basic queries -----------------------------------------------------

    @property
    def support_end(self) -> int:
        """One past the last stored bin."""
        return len(self.mass)

    @property
    def total_mass(self) -> float:
        """Stored mass, excluding the truncated tail."""
        return float(self.mass.sum())

    def to_pairs(self) -> list[list]:
        """Nonzero ``[bin, probability]`` pairs, suitable for JSON round-trips."""
        return [[int(k), float(self.mass[k])] for k in np.nonzero(self.mass)[0]]

    def cdf_array(self) -> np.ndarray:
        """Cumulative mass per bin, clamped into [0, 1] (read-only, cached)."""
        cached = self._cdf
        if cached is None:
            cached = np.minimum(np.cumsum(self.mass), 1.0)
            cached.setflags(write=False)
            object.__setattr__(self, "_cdf", cached)
        return cached

    def cdf(self, t: int) -> float:
        """P(travel time <= t bins).  The truncated tail never counts: its
        bins are only known to lie past the stored support."""
        if t < 0:
            return 0.0
        c = self.cdf_array()
        if len(c) == 0:
            return 0.0
        return float(c[min(int(t), len(c) - 1)])

    def percentile(self, p: float) -> int:
        """Smallest bin ``t`` with ``cdf(t) >= p`` (up to EXACT_TOL slack)."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"percentile fraction must lie in [0, 1], got {p}")
        c = self.cdf_array()
        idx = int(np.searchsorted(c, p - EXACT_TOL, side="left"))
        if idx >= len(c):
            raise ValueError(f"probability mass never reaches {p} within the stored support")
        return idx

    def mean(self) -> float:
        """Expected travel time in seconds.

        Undefined when mass was truncated away, since the tail's position is
        unknown.
        """
        if self.truncated_tail > NORMALIZATION_TOL:
            raise ValueError("mean is undefined for a truncated distribution")
        if len(self.mass) == 0:
            return 0.0
        return float(np.dot(np.arange(len(self.mass)), self.mass)) * self.dt

    def convolve(self, other: "DiscreteDistribution", cap: int | None = None) -> "DiscreteDistribution":
        return convolve(self, other, cap=cap)

    def __repr__(self) -> str:
        pairs = ", ".join(f"{k}:{self.mass[k]:.6g}" for k in np.nonzero(self.mass)[0][:8])
        more = "..." if np.count_nonzero(self.mass) > 8 else ""
        tail = f", tail={self.truncated_tail:.3g}" if self.truncated_tail > 0 else ""
        return f"DiscreteDistribution(dt={self.dt}, {{{pairs}{more}}}{tail})"


def convolve(a: DiscreteDistribution, b: DiscreteDistribution, cap: int | None = None) -> DiscreteDistribution:
    """Distribution of the sum of two independent travel times.

    ``result[k] = sum_j a[j] * b[k - j]`` for ``k < cap``; mass at or past
    ``cap`` is accumulated into the result's truncated tail.  Bookkeeping is
    exact: the result's total (stored + tail) equals ``total(a) * total(b)``.
    """
    if a.dt != b.dt:
        raise ValueError(f"time-step mismatch: {a.dt} vs {b.dt}")
    if cap is not None and cap < 1:
        raise ValueError(f"cap must be at least 1, got {cap}")

    total_a = a.total_mass + a.truncated_tail
    total_b = b.total_mass + b.truncated_tail
    grand_total = total_a * total_b

    if len(a.mass) == 0 or len(b.mass) == 0:
        full = np.zeros(0, dtype=np.float64)
    else:
        full = np.convolve(a.mass, b.mass)
    if cap is not None:
        full = full[:cap]
    stored = float(full.sum())
    tail = max(grand_total - stored, 0.0)
    return DiscreteDistribution(full, dt=a.dt, truncated_tail=tail)


def shifted_dot(q: DiscreteDistribution, u: np.ndarray, T: int) -> float:
    """Mix a path distribution with a per-budget reliability curve.

    Returns ``sum_{t=0..T} q[t] * u[T - t]``: the probability of finishing the
    fixed prefix in ``t`` bins and then succeeding with the remaining budget
    ``T - t``.  ``u`` must cover budgets ``0..T``.
    """
    if T < 0:
        raise ValueError(f"budget must be nonnegative, got {T}")
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or len(u) < T + 1:
        raise ValueError(f"reliability array must cover budgets 0..{T}")
    qm = q.mass[: T + 1]
    if len(qm) == 0:
        return 0.0
    rev = u[T::-1]
    return float(np.dot(qm, rev[: len(qm)]))


def reliability_curve(q: DiscreteDistribution, u: np.ndarray, horizon: int) -> np.ndarray:
    """``shifted_dot(q, u, t)`` for every ``t = 0..horizon`` in one pass.

    Equivalent to convolving ``q`` with ``u`` and reading the first
    ``horizon + 1`` entries; used when a whole budget range is swept.
    """
    u = np.asarray(u, dtype=np.float64)
    qm = q.mass[: horizon + 1]
    if len(qm) == 0 or len(u) == 0:
        return np.zeros(horizon + 1)
    full = np.convolve(qm, u[: horizon + 1])
    out = np.zeros(horizon + 1)
    n = min(horizon + 1, len(full))
    out[:n] = full[:n]
    return out
