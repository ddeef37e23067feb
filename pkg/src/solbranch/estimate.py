"""Streaming mean/variance accumulation and the deterministic path runner."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rng import prefetch_streams

__all__ = [
    "Estimate",
    "Accumulator",
    "accumulate",
    "merge",
    "Rejected",
    "REJECTED",
    "run_paths",
    "BLOCK_SIZE",
]

# paths per block; blocks are the unit of work and of merging, so results do
# not depend on the number of workers
BLOCK_SIZE = 2048


class Rejected:
    """Sentinel returned by a path function when a guard discards the path."""

    __slots__ = ("reason",)

    def __init__(self, reason: str = ""):
        self.reason = reason

    def __repr__(self):
        return f"Rejected({self.reason!r})"


REJECTED = Rejected()


@dataclass(frozen=True)
class Estimate:
    mean: complex | float
    standard_error: float
    n_samples: int
    n_rejected: int = 0
    elapsed: float = 0.0
    # per-component standard errors; equal to standard_error for real data
    stderr_re: float = float("nan")
    stderr_im: float = 0.0
    flags: tuple = ()
    reject_reasons: dict = field(default_factory=dict)

    @property
    def rejection_rate(self) -> float:
        total = self.n_samples + self.n_rejected
        return self.n_rejected / total if total else 0.0

    @property
    def is_complex(self) -> bool:
        return isinstance(self.mean, complex)

    def within(self, reference, n_sigma: float = 3.0, extra: float = 0.0) -> bool:
        return abs(self.mean - reference) <= n_sigma * self.standard_error + extra


class Accumulator:
    """Welford/Chan accumulator for real or complex samples.

    Keeps separate second moments for the real and imaginary parts so that
    component-wise standard errors are available for complex estimates.
    """

    __slots__ = ("n", "mean", "m2_re", "m2_im", "n_rejected", "is_complex", "reasons")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2_re = 0.0
        self.m2_im = 0.0
        self.n_rejected = 0
        self.is_complex = False
        self.reasons = {}

    def add(self, x):
        if isinstance(x, complex):
            self.is_complex = True
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        delta2 = x - self.mean
        if self.is_complex:
            d1, d2 = complex(delta), complex(delta2)
            self.m2_re += d1.real * d2.real
            self.m2_im += d1.imag * d2.imag
        else:
            self.m2_re += delta * delta2

    def reject(self, reason: str = ""):
        self.n_rejected += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1

    def add_batch(self, values: np.ndarray):
        """Two-pass statistics for a batch, merged with Chan's formula."""
        values = np.asarray(values)
        if values.size == 0:
            return
        other = Accumulator()
        other.n = values.size
        if np.iscomplexobj(values):
            other.is_complex = True
            m = complex(values.mean())
            d = values - m
            other.mean = m
            other.m2_re = float(np.dot(d.real, d.real))
            other.m2_im = float(np.dot(d.imag, d.imag))
        else:
            m = float(values.mean())
            d = values - m
            other.mean = m
            other.m2_re = float(np.dot(d, d))
        self.merge(other)

    def merge(self, other: "Accumulator"):
        self.n_rejected += other.n_rejected
        for k, v in other.reasons.items():
            self.reasons[k] = self.reasons.get(k, 0) + v
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean = other.n, other.mean
            self.m2_re, self.m2_im = other.m2_re, other.m2_im
            self.is_complex = self.is_complex or other.is_complex
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        if self.is_complex or other.is_complex or isinstance(delta, complex):
            self.is_complex = True
            dc = complex(delta)
            w = self.n * other.n / n
            self.m2_re += other.m2_re + dc.real * dc.real * w
            self.m2_im += other.m2_im + dc.imag * dc.imag * w
        else:
            self.m2_re += other.m2_re + delta * delta * self.n * other.n / n
        self.mean = self.mean + delta * other.n / n
        self.n = n
        return self

    def estimate(self, elapsed: float = 0.0, flags=()) -> Estimate:
        if self.n < 2:
            raise ValueError(f"need at least 2 accepted samples, have {self.n}")
        var_re = self.m2_re / (self.n - 1)
        var_im = self.m2_im / (self.n - 1)
        se_re = math.sqrt(var_re / self.n)
        se_im = math.sqrt(var_im / self.n)
        mean = complex(self.mean) if self.is_complex else float(self.mean)
        return Estimate(
            mean=mean,
            standard_error=math.sqrt((var_re + var_im) / self.n),
            n_samples=self.n,
            n_rejected=self.n_rejected,
            elapsed=elapsed,
            stderr_re=se_re,
            stderr_im=se_im,
            flags=tuple(flags),
            reject_reasons=dict(self.reasons),
        )


def accumulate(values: Sequence) -> Estimate:
    """Single-pass estimate of the mean and its standard error."""
    acc = Accumulator()
    for v in values:
        acc.add(v)
    if acc.n < 2:
        raise ValueError("accumulate needs at least 2 values")
    return acc.estimate()


def merge(*accumulators: Accumulator) -> Accumulator:
    out = Accumulator()
    for a in accumulators:
        out.merge(a)
    return out


def _run_block(path_fn, seed: int, start: int, stop: int, prefetch: int = 64) -> Accumulator:
    acc = Accumulator()
    values = []
    for stream in prefetch_streams(seed, start, stop, prefetch):
        v = path_fn(stream)
        if isinstance(v, Rejected):
            acc.reject(v.reason)
        else:
            values.append(v)
    if values:
        acc.add_batch(np.array(values))
    return acc


def default_workers() -> int:
    env = os.environ.get("SOLBRANCH_THREADS")
    return int(env) if env else 1


def run_paths(
    path_fn: Callable,
    n_samples: int,
    seed: int,
    workers: int | None = None,
    block_size: int = BLOCK_SIZE,
    flags=(),
    prefetch: int = 64,
) -> Estimate:
    """Evaluate ``path_fn(stream)`` on paths ``0..n_samples-1`` and reduce.

    Paths are cut into fixed blocks, each block is reduced in path order and
    the block accumulators are merged in block order, so the result is
    bit-identical for any worker count (``prefetch``, the number of draws
    generated up front per path, only affects speed).  ``path_fn`` may return a
    :class:`Rejected` to discard its path; discarded paths are counted.
    With ``workers > 1`` blocks run in a process pool and ``path_fn`` must be
    picklable.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    workers = default_workers() if workers is None else int(workers)
    t0 = time.perf_counter()
    bounds = [(s, min(s + block_size, n_samples)) for s in range(0, n_samples, block_size)]
    total = Accumulator()
    if workers <= 1 or len(bounds) == 1:
        for a, b in bounds:
            total.merge(_run_block(path_fn, seed, a, b, prefetch))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_block, path_fn, seed, a, b, prefetch) for a, b in bounds]
            for f in futures:
                total.merge(f.result())
    return total.estimate(elapsed=time.perf_counter() - t0, flags=flags)
