"""Zero-delay streaming convolution with a fixed kernel.

A :class:`ZeroDelayConvolver` consumes an input sequence one sample at a time
and can produce each output sample

    y(t) = sum_{tau >= kernel.min_bin} x(t - tau) * kernel[tau]

as soon as the inputs it depends on exist, i.e. right after ``feed(t')`` has
been called for every ``t' <= t - kernel.min_bin``.  Buffering a whole block
before any output becomes available (as plain FFT convolution would) is not
acceptable here because the surrounding dynamic program feeds the convolver
with values computed from its own earlier outputs.

The kernel is split at power-of-two boundaries into segments of length
1, 1, 2, 4, 8, ...  The first tap is applied directly on every feed; a
segment of length ``L`` (starting at kernel offset ``L``) is applied once per
``L`` input samples by convolving the just-completed input block with the
segment and accumulating into the output at the matching offset.  The
completed block is always available exactly when the earliest output needing
it is read, so no latency is introduced.  Segments shorter than ``crossover``
are convolved directly; longer ones go through (cached) real FFTs.  Amortized
work per sample is polylogarithmic in the stream length for long kernels.

An instance is single-owner: feeds must not race.  Distinct convolvers are
independent and may run on separate threads.
"""

from __future__ import annotations

import numpy as np

from .distributions import DiscreteDistribution

DEFAULT_CROSSOVER = 32


class ZeroDelayConvolver:
    """Streaming convolver for one kernel.

    Parameters
    ----------
    kernel:
        The distribution to convolve the fed sequence with.  Must have at
        least one positive bin.
    crossover:
        Segment length at which block convolutions switch from direct
        multiplication to FFTs.
    """

    def __init__(self, kernel: DiscreteDistribution, crossover: int = DEFAULT_CROSSOVER):
        if kernel.min_bin is None:
            raise ValueError("kernel has no probability mass")
        if crossover < 1:
            raise ValueError("crossover must be positive")
        self.kernel = kernel
        self.crossover = int(crossover)
        self._shift = kernel.min_bin
        core = np.ascontiguousarray(kernel.mass[kernel.min_bin :])
        self._core = core
        # (offset, segment, cached rfft of segment or None); offset == 2**m
        self._segments: list[tuple[int, np.ndarray, np.ndarray | None]] = []
        offset = 1
        while offset < len(core):
            seg = core[offset : min(2 * offset, len(core))]
            fft = np.fft.rfft(seg, 2 * offset) if offset >= self.crossover else None
            self._segments.append((offset, seg, fft))
            offset *= 2
        self._n = 0  # number of samples fed so far
        self._x = np.zeros(16)
        self._acc = np.zeros(16 + len(core))

    @property
    def fed(self) -> int:
        """Number of input samples fed so far."""
        return self._n

    def _ensure(self, n: int) -> None:
        if n > len(self._x):
            grown = np.zeros(max(n, 2 * len(self._x)))
            grown[: len(self._x)] = self._x
            self._x = grown
        need_acc = n + len(self._core)
        if need_acc > len(self._acc):
            grown = np.zeros(max(need_acc, 2 * len(self._acc)))
            grown[: len(self._acc)] = self._acc
            self._acc = grown

    def _run_block(self, end: int, offset: int, seg: np.ndarray, fft: np.ndarray | None) -> None:
        block = self._x[end - offset : end]
        if fft is None:
            contrib = np.convolve(block, seg)
        else:
            contrib = np.fft.irfft(np.fft.rfft(block, 2 * offset) * fft, 2 * offset)[
                : offset + len(seg) - 1
            ]
        self._acc[end : end + len(contrib)] += contrib

    def feed(self, t: int, value: float) -> None:
        """Supply input sample ``t``.  Samples must arrive as t = 0, 1, 2, ..."""
        if t != self._n:
            raise ValueError(f"out-of-order feed: expected sample {self._n}, got {t}")
        self._ensure(self._n + 1)
        n = self._n
        self._x[n] = value
        self._acc[n] += value * self._core[0]
        self._n = n + 1
        for offset, seg, fft in self._segments:
            if self._n % offset == 0:
                self._run_block(self._n, offset, seg, fft)

    def feed_block(self, values) -> None:
        """Supply a run of consecutive samples; bit-identical to repeated feed."""
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return
        self._ensure(self._n + len(values))
        for value in values:
            self.feed(self._n, float(value))

    def read(self, t: int) -> float:
        """Output sample ``t``; requires feeds through ``t - kernel.min_bin``."""
        if t < self._shift:
            return 0.0
        idx = t - self._shift
        if idx >= self._n:
            raise ValueError(
                f"read({t}) needs input samples through {idx}, but only {self._n} were fed"
            )
        return float(self._acc[idx])

    def read_block(self, lo: int, hi: int) -> np.ndarray:
        """Output samples ``lo..hi`` inclusive, same availability rule as read."""
        if hi < lo:
            return np.zeros(0)
        out = np.zeros(hi - lo + 1)
        if hi < self._shift:
            return out
        if hi - self._shift >= self._n:
            raise ValueError(
                f"read_block up to {hi} needs input samples through {hi - self._shift}, "
                f"but only {self._n} were fed"
            )
        first = max(lo, self._shift)
        out[first - lo :] = self._acc[first - self._shift : hi - self._shift + 1]
        return out
