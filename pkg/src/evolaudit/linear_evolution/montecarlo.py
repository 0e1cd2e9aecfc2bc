"""Euler-Maruyama paths for the stochastic representation of G(t,s).

G(t,s) solves the forward problem D_t u = A(t) u, u(s) = f. Its stochastic
representation runs the coefficient clock backwards: the path starts at x at
time t and is advanced with coefficients frozen at t, t - h, ..., s + h, and
G(t,s)f(x) is the mean of f at the end of the path. For autonomous operators
this is the usual forward simulation.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from ..errors import ArgumentError, EllipticityError, EvaluationError
from ..operator_model import OperatorFamily
from .backends import MonteCarlo, worker_count
from .grid import step_count
from .streams import block_generator

STEP_CHUNK = 64


def _simulate_block(op: OperatorFamily, x0: np.ndarray, t: float, s: float, n_steps: int, n_paths: int,
                    gen: np.random.Generator) -> np.ndarray:
    d = op.dimension
    h = (t - s) / n_steps
    sqrt_h = np.sqrt(h)
    x = np.repeat(x0[None, :], n_paths, axis=0)
    noise = None
    for k in range(n_steps):
        j = k % STEP_CHUNK
        if j == 0:
            noise = gen.standard_normal((min(STEP_CHUNK, n_steps - k), n_paths, d))
        tau = t - k * h
        drift = np.asarray(op.drift(tau, x), dtype=float).reshape(n_paths, d)
        z = noise[j]
        if d == 1:
            q = np.asarray(op.diffusion(tau, x[:1] if op.constant_diffusion else x), dtype=float).reshape(-1)
            if np.any(q <= 0):
                bad = int(np.flatnonzero(q <= 0)[0])
                raise EllipticityError("Cholesky of 2Q failed", tau, x[min(bad, len(x) - 1)].tolist())
            x = x + drift * h + (np.sqrt(2.0 * q) * sqrt_h)[:, None] * z
        else:
            q = np.asarray(op.diffusion(tau, x[:1] if op.constant_diffusion else x), dtype=float)
            q = q.reshape(-1, d, d)
            try:
                chol = np.linalg.cholesky(2.0 * q)
            except np.linalg.LinAlgError:
                eig = np.linalg.eigvalsh(q)[:, 0]
                bad = int(np.argmin(eig))
                raise EllipticityError("Cholesky of 2Q failed", tau, x[min(bad, len(x) - 1)].tolist()) from None
            if op.constant_diffusion:
                x = x + drift * h + sqrt_h * (z @ chol[0].T)
            else:
                x = x + drift * h + sqrt_h * np.einsum("nij,nj->ni", chol, z)
    if not np.all(np.isfinite(x)):
        raise EvaluationError("path simulation produced non-finite states", s, x0.tolist())
    return x


def simulate_terminal(op: OperatorFamily, mc: MonteCarlo, t: float, s: float, points: np.ndarray,
                      stream_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Terminal states of n_paths paths per point; shape (n_points, n_paths, d).

    ``stream_ids`` selects the random stream of each point (defaults to its
    index); sharing ids between points gives common random numbers.
    """
    if not t > s:
        raise ArgumentError(f"need s < t, got s={s}, t={t}")
    op.check_time(t)
    op.check_time(s)
    pts = np.asarray(points, dtype=float)
    ids = list(range(len(pts))) if stream_ids is None else [int(i) for i in stream_ids]
    n_steps = step_count(t - s, mc.dt)
    n_blocks = -(-mc.n_paths // mc.block)
    items = []
    for i in range(len(pts)):
        for blk in range(n_blocks):
            size = min(mc.block, mc.n_paths - blk * mc.block)
            items.append((i, blk, size))

    def work(item):
        i, blk, size = item
        gen = block_generator(mc.seed, ids[i], blk)
        return _simulate_block(op, pts[i], t, s, n_steps, size, gen)

    workers = worker_count(mc.workers)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(it) for it in items]
    out = np.empty((len(pts), mc.n_paths, op.dimension))
    for (i, blk, size), res in zip(items, results):
        out[i, blk * mc.block: blk * mc.block + size] = res
    return out
