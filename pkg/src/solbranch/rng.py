"""Counter-based random streams and the elementary samplers used by the engines.

Every path of every engine owns one stream, addressed by the pair
``(master_seed, path_index)``.  Draw ``k`` of a stream is a pure function of
``(master_seed, path_index, k)``: the generator is Philox4x32-10 keyed by the
master seed, with the path index in the upper counter words and the block
number in the lower ones.  Nothing is shared between streams, so paths can be
generated in any order, on any worker, and replayed bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "philox4x32",
    "RngStream",
    "split_stream",
    "prefetch_streams",
    "ReachedZero",
    "BranchAt",
    "sample_gaussian_step",
    "sample_branch_time_exponential",
    "sample_interrupt_uniform",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_MASK64 = (1 << 64) - 1

# uniforms per refill of a single stream
_CHUNK = 64
_INV53 = 1.0 / 9007199254740992.0


def philox4x32(counter, key):
    """Philox4x32-10 block function, vectorised over the counter words.

    ``counter`` is a 4-sequence of uint32 arrays (broadcastable), ``key`` a
    pair of python ints.  Returns four uint64 arrays holding 32-bit words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _S32) ^ c1 ^ np.uint64(k0),
            p1 & _LO,
            (p0 >> _S32) ^ c3 ^ np.uint64(k1),
            p0 & _LO,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _uniform_block(seed: int, paths: np.ndarray, first_block: int, n_blocks: int) -> np.ndarray:
    """Open-interval uniforms, shape (len(paths), 2 * n_blocks).

    Each Philox block yields four 32-bit words, combined pairwise into two
    53-bit mantissas; ``(m + 0.5) / 2**53`` keeps draws strictly inside (0, 1).
    """
    seed &= _MASK64
    key = (seed & 0xFFFFFFFF, seed >> 32)
    paths = np.asarray(paths, dtype=np.uint64)
    blocks = np.arange(first_block, first_block + n_blocks, dtype=np.uint64)
    c0 = (blocks & _LO)[None, :]
    c1 = (blocks >> _S32)[None, :]
    c2 = (paths & _LO)[:, None]
    c3 = (paths >> _S32)[:, None]
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    w0, w1, w2, w3 = philox4x32((c0, c1, c2, c3), key)
    a = ((w0 >> np.uint64(5)) << np.uint64(26)) | (w1 >> np.uint64(6))
    b = ((w2 >> np.uint64(5)) << np.uint64(26)) | (w3 >> np.uint64(6))
    out = np.empty((paths.size, 2 * n_blocks))
    out[:, 0::2] = (a.astype(np.float64) + 0.5) * _INV53
    out[:, 1::2] = (b.astype(np.float64) + 0.5) * _INV53
    return out


class RngStream:
    """Reproducible per-path stream of uniforms in (0, 1).

    Draws are buffered in chunks; the buffer contents never depend on how the
    stream was created, only on ``(master_seed, path_index)``.
    """

    __slots__ = ("master_seed", "path_index", "_buf", "_pos", "_next_block", "n_draws")

    def __init__(self, master_seed: int, path_index: int, _prefetched=None):
        self.master_seed = int(master_seed) & _MASK64
        self.path_index = int(path_index) & _MASK64
        if _prefetched is None:
            self._buf = []
            self._next_block = 0
        else:
            self._buf = _prefetched
            self._next_block = len(_prefetched) // 2
        self._pos = 0
        self.n_draws = 0

    def _refill(self):
        # chunks grow with the stream so long paths refill rarely
        blocks = max(_CHUNK // 2, min(self._next_block, 4096))
        arr = _uniform_block(self.master_seed, np.array([self.path_index]), self._next_block, blocks)
        self._buf = arr[0].tolist()
        self._next_block += blocks
        self._pos = 0

    def uniform(self) -> float:
        if self._pos == len(self._buf):
            self._refill()
        u = self._buf[self._pos]
        self._pos += 1
        self.n_draws += 1
        return u

    def normal(self) -> float:
        # Box-Muller, cosine branch only: two uniforms per normal
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def exponential(self) -> float:
        return -math.log(self.uniform())

    def __repr__(self):
        return f"RngStream(seed={self.master_seed}, path={self.path_index}, draws={self.n_draws})"


def split_stream(master_seed: int, path_index: int) -> RngStream:
    """The unique stream for ``(master_seed, path_index)``."""
    return RngStream(master_seed, path_index)


def prefetch_streams(master_seed: int, start: int, stop: int, n_uniforms: int = _CHUNK):
    """Streams for paths ``start..stop-1`` with their first draws generated in one
    vectorised call.  Identical draws to :func:`split_stream`."""
    n_blocks = max(1, (n_uniforms + 1) // 2)
    paths = np.arange(start, stop, dtype=np.uint64)
    arr = _uniform_block(master_seed, paths, 0, n_blocks)
    return [RngStream(master_seed, int(p), row) for p, row in zip(paths, arr.tolist())]


@dataclass(frozen=True)
class ReachedZero:
    pass


@dataclass(frozen=True)
class BranchAt:
    time: float


REACHED_ZERO = ReachedZero()


def sample_gaussian_step(s: RngStream, x: float, diffusion: float, dt: float) -> float:
    """Brownian displacement with generator ``diffusion * d^2/dx^2`` over ``dt``."""
    if diffusion < 0 or dt < 0:
        raise ValueError(f"need diffusion >= 0 and dt >= 0, got {diffusion}, {dt}")
    if diffusion == 0 or dt == 0:
        return x
    return x + math.sqrt(2.0 * diffusion * dt) * s.normal()


def sample_branch_time_exponential(s: RngStream, rate: float, horizon: float):
    """Exponential clock truncated at ``horizon``.

    One uniform: ``s = -log(U)/rate``.  ``s >= horizon`` has probability
    ``exp(-rate*horizon)`` and means the line reaches time zero; otherwise the
    branch time has the conditional density ``rate*exp(-rate*s)/(1-exp(-rate*horizon))``.
    """
    if not rate > 0 or not horizon > 0:
        raise ValueError(f"need rate > 0 and horizon > 0, got {rate}, {horizon}")
    t = -math.log(s.uniform()) / rate
    if t >= horizon:
        return REACHED_ZERO
    return BranchAt(t)


def sample_interrupt_uniform(s: RngStream, p_survive: float, horizon: float):
    if not 0.0 < p_survive < 1.0:
        raise ValueError(f"p_survive must lie in (0, 1), got {p_survive}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if s.uniform() < p_survive:
        return REACHED_ZERO
    return BranchAt(s.uniform() * horizon)
