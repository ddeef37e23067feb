"""Branch tables: matched (probability, multiplier) pairs.

A table is always built from raw integral-equation coefficients and declared
non-negative weights.  Probabilities are the normalized weights and each
multiplier is ``coefficient / probability``, so ``p_i * M_i`` reproduces the
coefficient whatever the weights were.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

__all__ = ["BranchEntry", "BranchTable", "make_branch_table", "sample_poisson_tail", "poisson_tail_pmf"]


@dataclass(frozen=True)
class BranchEntry:
    tag: str
    probability: float
    multiplier: complex | float
    coefficient: complex | float
    arity: object = None  # child count, "poisson-tail", or None


class BranchTable:
    __slots__ = ("entries", "_cdf")

    def __init__(self, entries: Sequence[BranchEntry]):
        self.entries = tuple(entries)
        cdf, acc = [], 0.0
        for e in self.entries:
            acc += e.probability
            cdf.append(acc)
        self._cdf = cdf

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, tag: str) -> BranchEntry:
        for e in self.entries:
            if e.tag == tag:
                return e
        raise KeyError(tag)

    @property
    def probabilities(self):
        return [e.probability for e in self.entries]

    @property
    def multipliers(self):
        return [e.multiplier for e in self.entries]

    def pick(self, u: float) -> BranchEntry:
        """Entry selected by a uniform ``u`` in (0, 1) (inverse CDF)."""
        for e, c in zip(self.entries, self._cdf):
            if u < c:
                return e
        return self.entries[-1]

    def sample(self, stream) -> BranchEntry:
        return self.pick(stream.uniform())

    def __repr__(self):
        body = ", ".join(f"{e.tag}: p={e.probability:.6g} M={e.multiplier:.6g}" for e in self.entries)
        return f"BranchTable({body})"


def make_branch_table(raw) -> BranchTable:
    """Build a table from ``(tag, coefficient, weight[, arity])`` tuples.

    Entries with weight 0 are dropped; their coefficient must be 0.
    """
    raw = [tuple(r) for r in raw]
    total = 0.0
    for r in raw:
        w = r[2]
        if not (w >= 0) or math.isinf(w):
            raise ValueError(f"weight for {r[0]!r} must be finite and non-negative, got {w}")
        total += w
    if not total > 0:
        raise ValueError("branch table needs a positive total weight")
    entries = []
    for r in raw:
        tag, coeff, w = r[0], r[1], r[2]
        arity = r[3] if len(r) > 3 else None
        if w == 0:
            if coeff != 0:
                raise ValueError(f"entry {tag!r} has zero weight but coefficient {coeff}")
            continue
        p = w / total
        entries.append(BranchEntry(tag, p, coeff / p, coeff, arity))
    return BranchTable(entries)


def poisson_tail_pmf(j: int, min_j: int) -> float:
    if j < min_j:
        return 0.0
    z = math.e - sum(1.0 / math.factorial(i) for i in range(min_j))
    return 1.0 / (math.factorial(j) * z)


_TAIL_CDF = {}


def _tail_cdf(min_j: int):
    cdf = _TAIL_CDF.get(min_j)
    if cdf is None:
        z = math.e - sum(1.0 / math.factorial(i) for i in range(min_j))
        cdf, acc, j = [], 0.0, min_j
        while True:
            acc += 1.0 / (math.factorial(j) * z)
            cdf.append(acc)
            if 1.0 - acc < 1e-15 or j > 40:
                break
            j += 1
        _TAIL_CDF[min_j] = cdf
    return cdf


def sample_poisson_tail(s, min_j: int) -> int:
    """``j >= min_j`` with ``P(j)`` proportional to ``1/j!``."""
    if min_j not in (0, 1, 2):
        raise ValueError(f"min_j must be 0, 1 or 2, got {min_j}")
    u = s.uniform()
    cdf = _tail_cdf(min_j)
    for i, c in enumerate(cdf):
        if u < c:
            return min_j + i
    return min_j + len(cdf) - 1
