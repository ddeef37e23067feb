"""Single-line estimator for the heat equation ``u_t = D u_xx``.

``u(t, x) = E f(x + sqrt(2 D t) Z)``; the simplest path of the engine and the
smoke test for streams, samplers and the reducer together.
"""
from __future__ import annotations

import math
import time

import numpy as np

from .estimate import Accumulator, Estimate
from .expr import Expr, compile_expr, parse
from .rng import _uniform_block

__all__ = ["estimate_heat"]


def estimate_heat(init: Expr | str, x: float, t: float, diffusion: float = 0.5,
                  n_samples: int = 100_000, seed: int = 0) -> Estimate:
    if isinstance(init, str):
        init = parse(init, {"x"})
    f = compile_expr(init)
    t0 = time.perf_counter()
    # same draws as RngStream.normal() on each path's stream, done in bulk
    acc = Accumulator()
    block = 1 << 15
    for start in range(0, n_samples, block):
        paths = np.arange(start, min(start + block, n_samples), dtype=np.uint64)
        u = _uniform_block(seed, paths, 0, 1)
        z = np.sqrt(-2.0 * np.log(u[:, 0])) * np.cos(2.0 * math.pi * u[:, 1])
        acc.add_batch(np.asarray(f({"x": x + math.sqrt(2.0 * diffusion * t) * z}), dtype=float)
                      * np.ones_like(z))
    return acc.estimate(elapsed=time.perf_counter() - t0)

