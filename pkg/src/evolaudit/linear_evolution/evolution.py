"""Backend-independent entry points for G(t,s)f and its gradient."""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..errors import ArgumentError
from ..fields import Field, as_points
from ..operator_model import OperatorFamily
from .backends import FieldSample, Grid, MonteCarlo
from .grid import GridSolver
from .montecarlo import simulate_terminal

Backend = Union[MonteCarlo, Grid]
FieldLike = Union[Field, Callable[[np.ndarray], np.ndarray]]

GRAD_STEP = 1e-4


def _values(f: FieldLike, x: np.ndarray) -> np.ndarray:
    return np.asarray(f(x) if isinstance(f, Field) else f(x), dtype=float).reshape(len(x))


def _check_times(op: OperatorFamily, t: float, s: float) -> None:
    if not t > s:
        raise ArgumentError(f"need s < t, got s={s}, t={t}")
    op.check_time(t)
    op.check_time(s)


def _truncation_warnings(grid: Grid, pts: np.ndarray) -> list:
    far = np.max(np.abs(pts), axis=1) > 0.9 * grid.radius
    if np.any(far):
        return [f"{int(np.sum(far))} evaluation point(s) beyond 0.9*R_trunc={0.9 * grid.radius:g}; "
                "truncated-domain error not controlled there"]
    return []


_SOLVERS: dict = {}


def grid_solver(op: OperatorFamily, grid: Grid) -> GridSolver:
    """Solver cache keyed by operator identity and grid parameters."""
    key = (id(op), grid)
    solver = _SOLVERS.get(key)
    if solver is None or solver.op is not op:
        if len(_SOLVERS) > 32:
            _SOLVERS.clear()
        solver = GridSolver(op, grid)
        _SOLVERS[key] = solver
    return solver


def lattice_solution(op: OperatorFamily, grid: Grid, t: float, s: float, fields: Sequence[FieldLike]) -> np.ndarray:
    """G(t,s)f on the lattice for several data at once; shape (N, m)."""
    _check_times(op, t, s)
    solver = grid_solver(op, grid)
    data = np.stack([_values(f, solver.lattice.nodes) for f in fields], axis=1)
    return solver.propagate(data, s, t)


def g_apply_many(op: OperatorFamily, backend: Backend, t: float, s: float, fields: Sequence[FieldLike], points,
                 stream_ids: Optional[Sequence[int]] = None) -> list:
    """G(t,s)f at ``points`` for each f in ``fields``, sharing paths or lattice solves."""
    _check_times(op, t, s)
    pts = as_points(points, op.dimension)
    if isinstance(backend, Grid):
        solver = grid_solver(op, backend)
        sol = lattice_solution(op, backend, t, s, fields)
        vals = solver.lattice.interpolate(sol, pts)
        warn = _truncation_warnings(backend, pts)
        return [FieldSample(pts, vals[:, j].copy(), np.zeros(len(pts)), warnings=list(warn))
                for j in range(len(fields))]
    if isinstance(backend, MonteCarlo):
        terminal = simulate_terminal(op, backend, t, s, pts, stream_ids)
        n, m, d = terminal.shape
        flat = terminal.reshape(n * m, d)
        out = []
        for f in fields:
            payoff = _values(f, flat).reshape(n, m)
            mean = payoff.mean(axis=1)
            se = payoff.std(axis=1, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(n)
            out.append(FieldSample(pts, mean, se))
        return out
    raise ArgumentError(f"unknown backend {backend!r}")


def g_apply(op: OperatorFamily, backend: Backend, t: float, s: float, f: FieldLike, points,
            stream_ids: Optional[Sequence[int]] = None) -> FieldSample:
    """G(t,s)f evaluated at ``points`` with per-point standard errors (zero on a grid)."""
    return g_apply_many(op, backend, t, s, [f], points, stream_ids)[0]


def g_gradient(op: OperatorFamily, backend: Backend, t: float, s: float, f: FieldLike, points) -> FieldSample:
    """Central differences of G(t,s)f with step 1e-4 (1 + |x|); MC stencils share random numbers."""
    _check_times(op, t, s)
    pts = as_points(points, op.dimension)
    n, d = pts.shape
    h = GRAD_STEP * (1.0 + np.linalg.norm(pts, axis=1))
    stencil = [pts]
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        stencil.append(pts + h[:, None] * e)
        stencil.append(pts - h[:, None] * e)
    all_pts = np.vstack(stencil)
    ids = np.tile(np.arange(n), 2 * d + 1)
    if isinstance(backend, Grid):
        solver = grid_solver(op, backend)
        sol = lattice_solution(op, backend, t, s, [f])[:, 0]
        vals = solver.lattice.interpolate(sol, all_pts).reshape(2 * d + 1, n)
        grad = np.stack([(vals[1 + 2 * k] - vals[2 + 2 * k]) / (2 * h) for k in range(d)], axis=1)
        return FieldSample(pts, vals[0], np.zeros(n), grad, np.zeros((n, d)),
                           warnings=_truncation_warnings(backend, pts))
    terminal = simulate_terminal(op, backend, t, s, all_pts, ids)
    m = terminal.shape[1]
    payoff = _values(f, terminal.reshape(-1, d)).reshape(2 * d + 1, n, m)
    value = payoff[0].mean(axis=1)
    value_se = payoff[0].std(axis=1, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(n)
    grad = np.empty((n, d))
    grad_se = np.empty((n, d))
    for k in range(d):
        quotient = (payoff[1 + 2 * k] - payoff[2 + 2 * k]) / (2 * h[:, None])
        grad[:, k] = quotient.mean(axis=1)
        grad_se[:, k] = quotient.std(axis=1, ddof=1) / np.sqrt(m) if m > 1 else 0.0
    return FieldSample(pts, value, value_se, grad, grad_se)
