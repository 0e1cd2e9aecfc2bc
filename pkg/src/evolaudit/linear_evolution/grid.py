"""Crank-Nicolson realization of G(t,s) on a truncated lattice."""

from __future__ import annotations

import math
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.linalg import lapack
from scipy.sparse.linalg import splu

from ..errors import ArgumentError, EllipticityError
from ..operator_model import OperatorFamily
from .backends import Grid

Source = Union[None, np.ndarray, Callable[[int, float], np.ndarray]]


def step_count(span: float, dt: float) -> int:
    return max(1, int(math.ceil(span / dt - 1e-9)))


class Lattice:
    """Tensor lattice with n_cells + 1 nodes per axis on [-R, R]^d (C-ordered)."""

    def __init__(self, dimension: int, radius: float, n_cells: int):
        self.dimension = dimension
        self.radius = float(radius)
        self.n_cells = int(n_cells)
        self.axis = np.linspace(-radius, radius, n_cells + 1)
        self.h = 2.0 * radius / n_cells
        self.shape = (n_cells + 1,) * dimension
        mesh = np.meshgrid(*([self.axis] * dimension), indexing="ij")
        self.nodes = np.stack([m.ravel() for m in mesh], axis=1)
        idx = np.stack(np.meshgrid(*([np.arange(n_cells + 1)] * dimension), indexing="ij"), -1).reshape(-1, dimension)
        self.boundary = np.any((idx == 0) | (idx == n_cells), axis=1)
        self.interior = ~self.boundary
        self._idx = idx

    @property
    def size(self) -> int:
        return len(self.nodes)

    def box_mask(self, half_width: float) -> np.ndarray:
        return np.all(np.abs(self.nodes) <= half_width + 1e-12, axis=1)

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Cubic interpolation of lattice values; points outside the box use the nearest boundary value."""
        pts = np.clip(np.asarray(points, dtype=float), -self.radius, self.radius)
        if self.dimension == 1:
            return CubicSpline(self.axis, values, axis=0)(pts[:, 0])
        grid = values.reshape(self.shape + values.shape[1:])
        interp = RegularGridInterpolator([self.axis] * self.dimension, grid, method="cubic")
        return interp(pts)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Finite-difference gradient, fourth order in the interior.

        ``values`` has shape (..., N); the result has shape (..., N, d).
        """
        lead = values.shape[:-1]
        u = values.reshape(lead + self.shape)
        out = np.empty(lead + (self.size, self.dimension))
        h = self.h
        nd = len(lead)
        for k in range(self.dimension):
            ax = nd + k
            g = np.empty_like(u)

            def sl(a, b):
                s = [slice(None)] * u.ndim
                s[ax] = slice(a, b)
                return tuple(s)

            n = self.n_cells
            g[sl(2, n - 1)] = (u[sl(0, n - 3)] - 8 * u[sl(1, n - 2)] + 8 * u[sl(3, n)] - u[sl(4, n + 1)]) / (12 * h)
            g[sl(1, 2)] = (u[sl(2, 3)] - u[sl(0, 1)]) / (2 * h)
            g[sl(n - 1, n)] = (u[sl(n, n + 1)] - u[sl(n - 2, n - 1)]) / (2 * h)
            g[sl(0, 1)] = (-3 * u[sl(0, 1)] + 4 * u[sl(1, 2)] - u[sl(2, 3)]) / (2 * h)
            g[sl(n, n + 1)] = (3 * u[sl(n, n + 1)] - 4 * u[sl(n - 1, n)] + u[sl(n - 2, n - 1)]) / (2 * h)
            out[..., k] = g.reshape(lead + (self.size,))
        return out


class GridSolver:
    """Theta-scheme for D_t u = A(t) u + g on the lattice, boundary rows of A set to zero.

    With g = 0 the boundary keeps the initial data (frozen Dirichlet); with a
    source the boundary follows D_t u = g, which is what the Duhamel formula
    gives when each G(t,r) freezes its own data at the boundary.
    """

    def __init__(self, op: OperatorFamily, grid: Grid):
        if op.dimension > 3:
            raise ArgumentError("grids are limited to d <= 3")
        self.op = op
        self.grid = grid
        self.lattice = Lattice(op.dimension, grid.radius, grid.n_cells)
        self.theta = grid.theta
        self._cache: dict = {}
        self._interior_nodes = self.lattice.nodes[self.lattice.interior]

    # -- generator assembly -------------------------------------------------
    def _coefficients(self, t: float):
        pts = self._interior_nodes
        q = self.op.Q(t, pts)
        b = self.op.b(t, pts)
        if self.op.dimension == 1:
            bad = q[:, 0, 0] <= 0
        else:
            bad = np.linalg.eigvalsh(q)[:, 0] <= 0
        if np.any(bad):
            raise EllipticityError("diffusion not positive definite on the lattice", t,
                                   pts[np.flatnonzero(bad)[0]].tolist())
        return q, b

    def _tridiagonal(self, t: float):
        """(lower, main, upper) rows of A(t); lower[k] multiplies u[k-1]."""
        n = self.lattice.size
        h = self.lattice.h
        q, b = self._coefficients(t)
        qq, bb = q[:, 0, 0], b[:, 0]
        lower = np.zeros(n)
        main = np.zeros(n)
        upper = np.zeros(n)
        lower[1:-1] = qq / h**2 - bb / (2 * h)
        main[1:-1] = -2 * qq / h**2
        upper[1:-1] = qq / h**2 + bb / (2 * h)
        return lower, main, upper

    def _sparse(self, t: float) -> sp.csr_matrix:
        lat = self.lattice
        d = lat.dimension
        h = lat.h
        q, b = self._coefficients(t)
        rows_int = np.flatnonzero(lat.interior)
        idx = lat._idx[rows_int]
        strides = np.array([int(np.prod(lat.shape[k + 1:])) for k in range(d)])
        rows, cols, vals = [], [], []

        def add(offset, coeff):
            rows.append(rows_int)
            cols.append(rows_int + offset)
            vals.append(coeff)

        diag = np.zeros(len(rows_int))
        for i in range(d):
            add(strides[i], q[:, i, i] / h**2 + b[:, i] / (2 * h))
            add(-strides[i], q[:, i, i] / h**2 - b[:, i] / (2 * h))
            diag -= 2 * q[:, i, i] / h**2
            for j in range(i + 1, d):
                c = 2 * q[:, i, j] / (4 * h**2)
                add(strides[i] + strides[j], c)
                add(-strides[i] - strides[j], c)
                add(strides[i] - strides[j], -c)
                add(-strides[i] + strides[j], -c)
        add(0, diag)
        del idx
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(lat.size, lat.size))

    def generator(self, t: float):
        if self.op.autonomous:
            key = ("gen",)
            if key not in self._cache:
                self._cache[key] = self._tridiagonal(t) if self.op.dimension == 1 else self._sparse(t)
            return self._cache[key]
        return self._tridiagonal(t) if self.op.dimension == 1 else self._sparse(t)

    def apply_generator(self, t: float, u: np.ndarray) -> np.ndarray:
        gen = self.generator(t)
        if self.op.dimension == 1:
            return _tri_apply(gen, u)
        return gen @ u

    # -- implicit solves ------------------------------------------------------
    def _factor(self, t: float, dt: float):
        key = ("lhs", dt)
        if self.op.autonomous and key in self._cache:
            return self._cache[key]
        gen = self.generator(t)
        if self.op.dimension == 1:
            lower, main, upper = gen
            dl = -self.theta * dt * lower[1:]
            dd = 1.0 - self.theta * dt * main
            du = -self.theta * dt * upper[:-1]
            dl, dd, du, du2, ipiv, info = lapack.dgttrf(dl, dd, du)
            if info != 0:
                raise ArgumentError(f"tridiagonal factorization failed (info={info})")
            fac = ("tri", dl, dd, du, du2, ipiv)
        else:
            mat = sp.identity(self.lattice.size, format="csc") - self.theta * dt * gen.tocsc()
            fac = ("lu", splu(mat.tocsc()))
        if self.op.autonomous:
            self._cache[key] = fac
        return fac

    @staticmethod
    def _solve(fac, rhs: np.ndarray) -> np.ndarray:
        if fac[0] == "tri":
            _, dl, dd, du, du2, ipiv = fac
            x, info = lapack.dgttrs(dl, dd, du, du2, ipiv, rhs)
            if info != 0:
                raise ArgumentError("tridiagonal solve failed")
            return x
        return fac[1].solve(rhs)

    def propagate(self, u0: np.ndarray, s: float, t: float, source: Source = None, n_steps: Optional[int] = None,
                  store: bool = False):
        """Advance lattice data from s to t.

        ``source`` is an array of shape (n_steps + 1, N) on the step grid or a
        callable (k, time) -> (N,) array. Returns u(t), or (times, all states)
        when ``store`` is set.
        """
        if not t > s:
            raise ArgumentError(f"need s < t, got s={s}, t={t}")
        n = n_steps or step_count(t - s, self.grid.dt)
        dt = (t - s) / n
        th = self.theta
        u = np.array(u0, dtype=float, copy=True)
        times = s + dt * np.arange(n + 1)
        times[-1] = t
        history = np.empty((n + 1,) + u.shape) if store else None
        if store:
            history[0] = u

        def src(k):
            if callable(source):
                return np.asarray(source(k, times[k]), dtype=float)
            return source[k]

        g_prev = src(0) if source is not None else None
        for k in range(n):
            rhs = u + (1.0 - th) * dt * self.apply_generator(times[k], u)
            if source is not None:
                g_next = src(k + 1)
                rhs = rhs + dt * (th * g_next + (1.0 - th) * g_prev)
                g_prev = g_next
            u = self._solve(self._factor(times[k + 1], dt), rhs)
            if store:
                history[k + 1] = u
        if store:
            return times, history
        return u


def _tri_apply(gen, u: np.ndarray) -> np.ndarray:
    lower, main, upper = gen
    if u.ndim == 1:
        out = main * u
        out[1:] += lower[1:] * u[:-1]
        out[:-1] += upper[:-1] * u[1:]
        return out
    out = main[:, None] * u
    out[1:] += lower[1:, None] * u[:-1]
    out[:-1] += upper[:-1, None] * u[1:]
    return out
