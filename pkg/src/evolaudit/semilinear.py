"""Nonlinear evolution operator N(t,s) by Picard iteration on the Duhamel formula.

The mild solution of D_t u = A(t)u + psi(t, x, u, grad u), u(s) = f solves
u(t) = G(t,s)f + integral_s^t G(t,r) psi_u(r) dr. On the lattice backend each
Picard step is one Crank-Nicolson sweep with the source psi_u evaluated from
the previous iterate at every time step, which is the trapezoidal Duhamel
quadrature of the same scheme; its fixed point is the fully implicit solve.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linprog

from .audit import AuditRecord, make_record, skipped_record
from .errors import ArgumentError, WindowFailure
from .fields import Field, as_points
from .linear_evolution import FieldSample, Grid, Lattice, MonteCarlo, g_apply, grid_solver
from .linear_evolution.grid import step_count
from .operator_model import OperatorFamily

log = logging.getLogger(__name__)

PsiFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

MAX_ITER = 60
MAX_BISECTIONS = 4
STALL_RATIO = 0.9


# -- nonlinearities -----------------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """psi(t, x, u, v) with its certificate constants.

    ``psi`` is vectorized: t is a scalar or an (n,) array, x is (n, d), u is
    (n,) and v is (n, d). ``lipschitz`` is the global constant in (u, v),
    ``xi0``, ``xi1``, ``xi2`` bound u psi from above.
    """

    psi: PsiFn
    lipschitz: float
    xi0: float = 0.0
    xi1: float = 0.0
    xi2: float = 0.0
    beta: float = 0.0
    gamma: float = 1.0
    name: str = "psi"
    is_zero: bool = False
    linear_coefficient: Optional[float] = None
    source_free: bool = True
    certificates_checked: bool = False

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ArgumentError("beta must lie in [0, 1)")
        if self.xi0 < 0:
            raise ArgumentError("xi0 must be non-negative")

    def __call__(self, t, x, u, v) -> np.ndarray:
        return np.asarray(self.psi(t, x, u, v), dtype=float).reshape(len(u))

    def at_zero(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self(t, x, np.zeros(len(x)), np.zeros_like(x))


def zero_nonlinearity() -> Nonlinearity:
    return Nonlinearity(lambda t, x, u, v: np.zeros(len(u)), 0.0, name="zero", is_zero=True)


def linear_nonlinearity(xi1: float) -> Nonlinearity:
    """psi = xi1 u."""
    return Nonlinearity(lambda t, x, u, v: xi1 * u, abs(xi1), xi1=xi1, name=f"linear({xi1:g})",
                        linear_coefficient=xi1)


def arctan_damping() -> Nonlinearity:
    """psi = -arctan(u): u psi <= 0 so every xi may be taken 0."""
    return Nonlinearity(lambda t, x, u, v: -np.arctan(u), 1.0, name="-arctan(u)")


def damped_arctan(rate: float = 1.0) -> Nonlinearity:
    """psi = -rate u - arctan(u), with xi1 = -rate."""
    return Nonlinearity(lambda t, x, u, v: -rate * u - np.arctan(u), rate + 1.0, xi1=-rate,
                        name=f"-{rate:g}u-arctan(u)")


def gradient_coupled(eps: float = 0.1) -> Nonlinearity:
    """psi = -arctan(u) + eps tanh(v_0)."""
    return Nonlinearity(lambda t, x, u, v: -np.arctan(u) + eps * np.tanh(v[:, 0]), 1.0 + eps, xi2=eps,
                        name=f"-arctan(u)+{eps:g}tanh(v)")


def forced_arctan(amplitude: float = 0.1) -> Nonlinearity:
    """psi = -arctan(u) + amplitude sin(t)/(1 + |x|^2)."""
    def psi(t, x, u, v):
        return -np.arctan(u) + amplitude * np.sin(t) / (1.0 + np.sum(x * x, axis=1))

    return Nonlinearity(psi, 1.0, xi0=abs(amplitude), name=f"-arctan(u)+{amplitude:g}sin(t)/(1+x^2)",
                        source_free=False)


def check_nonlinearity_certificates(nl: Nonlinearity, dimension: int, t_range=(0.0, 5.0), n: int = 20000,
                                    seed: int = 0, x_radius: float = 8.0) -> tuple[AuditRecord, Nonlinearity]:
    """Sampled audit of the sign condition, the Lipschitz bound and sup|psi(.,.,0,0)| <= xi0."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(*t_range, size=n)
    x = rng.uniform(-x_radius, x_radius, size=(n, dimension))
    scale = 10.0 ** rng.uniform(-3, 2, size=n)
    u = rng.standard_normal(n) * scale
    v = rng.standard_normal((n, dimension)) * scale[:, None]
    u2 = u + rng.standard_normal(n) * 0.1 * scale
    v2 = v + rng.standard_normal((n, dimension)) * 0.1 * scale[:, None]
    vnorm = np.linalg.norm(v, axis=1)
    val = nl(t, x, u, v)
    sign_lhs = u * val
    sign_rhs = nl.xi0 * np.abs(u) + nl.xi1 * u**2 + nl.xi2 * np.abs(u) * vnorm
    lip_lhs = np.abs(val - nl(t, x, u2, v2))
    lip_rhs = nl.lipschitz * (np.abs(u - u2) + np.linalg.norm(v - v2, axis=1))
    zero_lhs = np.abs(nl.at_zero(t, x))
    zero_rhs = np.full(n, nl.xi0)
    lhs = np.concatenate([sign_lhs, lip_lhs, zero_lhs])
    rhs = np.concatenate([sign_rhs, lip_rhs, zero_rhs])
    slack = 1e-10 * (1.0 + np.abs(rhs))
    parts = ["sign", "lipschitz", "psi_at_zero"]
    tightest = parts[int(np.argmax(lhs - rhs - slack)) // n]
    rec = make_record("nonlinearity-certificates",
                      {"psi": nl.name, "xi0": nl.xi0, "xi1": nl.xi1, "xi2": nl.xi2, "L": nl.lipschitz,
                       "n_samples": n, "seed": seed},
                      lhs, rhs, slack, {"parts": parts, "tightest_part": tightest})
    if not rec.passed:
        rec.details["failing_part"] = tightest
    return rec, replace(nl, certificates_checked=rec.passed)


# -- Duhamel quadrature -------------------------------------------------------

def duhamel_term(op: OperatorFamily, backend, s: float, t: float, source: Callable[[float, np.ndarray], np.ndarray],
                 points, gamma_sing: float = 0.0, n_quad: int = 32) -> FieldSample:
    """z(t) = integral_s^t G(t,r) g(r) dr by a graded midpoint rule.

    The substitution r = s + (t - s) tau^{1/(1 - gamma_sing)} removes a blow-up
    (r - s)^{-gamma_sing} of g at r = s; each node costs one application of G.
    """
    if not 0.0 <= gamma_sing < 1.0:
        raise ArgumentError("gamma_sing must lie in [0, 1)")
    if not t > s:
        raise ArgumentError("need s < t")
    pts = as_points(points, op.dimension)
    expo = 1.0 / (1.0 - gamma_sing)
    total = np.zeros(len(pts))
    var = np.zeros(len(pts))
    for j in range(n_quad):
        tau = (j + 0.5) / n_quad
        r = s + (t - s) * tau**expo
        jac = (t - s) * expo * tau ** (expo - 1.0) / n_quad
        sample = g_apply(op, backend, t, r, lambda x, r=r: source(r, x), pts)
        total += jac * sample.values
        var += (jac * sample.std_errors) ** 2
    return FieldSample(pts, total, np.sqrt(var))


def check_duhamel_bound(z: FieldSample, s: float, t: float, gamma_sing: float, source_seminorm: float) -> AuditRecord:
    """sup |z(t)| <= (t - s)^{1 - gamma} / (1 - gamma) sup_r (r - s)^gamma ||g(r)||_inf."""
    bound = (t - s) ** (1.0 - gamma_sing) / (1.0 - gamma_sing) * source_seminorm
    lhs = np.abs(z.values)
    return make_record("duhamel-bound", {"s": s, "t": t, "gamma_sing": gamma_sing, "seminorm": source_seminorm},
                       lhs, np.full(len(lhs), bound), 3 * z.std_errors + 1e-12 * (1 + bound))


# -- mild solutions -----------------------------------------------------------

@dataclass(frozen=True)
class WindowSummary:
    start: float
    end: float
    iterations: int
    ratios: tuple
    y_delta_norm: float
    bisections: int
    converged: bool

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def eventual_ratio(self) -> float:
        """Largest ratio over the second half of the sweeps; early sweeps may be transient."""
        if not self.ratios:
            return 0.0
        return max(self.ratios[len(self.ratios) // 2:])

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "iterations": self.iterations, "ratios": list(self.ratios),
                "max_ratio": self.max_ratio, "eventual_ratio": self.eventual_ratio, "y_delta_norm": self.y_delta_norm, "bisections": self.bisections,
                "converged": self.converged}


@dataclass(frozen=True)
class MildSolution:
    """u and grad u on a lattice at every solver time, plus the Picard record per window."""

    s: float
    f_name: str
    times: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    lattice: Lattice
    windows: tuple
    linear_mode: bool
    tol_fix: float
    dt: float

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def _index(self, t: float) -> tuple[int, float]:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ArgumentError(f"time {t} outside the solved interval [{self.times[0]}, {self.times[-1]}]")
        j = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        w = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        return j, float(np.clip(w, 0.0, 1.0))

    def at(self, t: float) -> np.ndarray:
        """Lattice values at time t (linear in t between solver times)."""
        j, w = self._index(t)
        if w == 0.0:
            return self.values[j]
        if w == 1.0:
            return self.values[j + 1]
        return (1 - w) * self.values[j] + w * self.values[j + 1]

    def gradient_at(self, t: float) -> np.ndarray:
        j, w = self._index(t)
        if w == 0.0:
            return self.gradients[j]
        if w == 1.0:
            return self.gradients[j + 1]
        return (1 - w) * self.gradients[j] + w * self.gradients[j + 1]

    def evaluate(self, t: float, points) -> np.ndarray:
        pts = as_points(points, self.lattice.dimension)
        return self.lattice.interpolate(self.at(t), pts)

    def evaluate_gradient(self, t: float, points) -> np.ndarray:
        pts = as_points(points, self.lattice.dimension)
        return self.lattice.interpolate(self.gradient_at(t), pts)

    def y_delta_norm(self, start: float, end: float, box: Optional[float] = None) -> float:
        return y_delta_norm(self, start, end, box)

    def picard_trace(self) -> list:
        return [w.to_dict() for w in self.windows]

    def write(self, directory, times: Optional[Sequence[float]] = None, meta: Optional[dict] = None) -> dict:
        """Per-time CSV field files plus manifest.json; returns the manifest."""
        os.makedirs(directory, exist_ok=True)
        times = list(self.times if times is None else times)
        files = []
        d = self.lattice.dimension
        for k, t in enumerate(times):
            name = f"u_{k:04d}.csv"
            u = self.at(t)
            g = self.gradient_at(t)
            table = np.column_stack([self.lattice.nodes, u, g])
            header = ",".join([f"x{i}" for i in range(d)] + ["u"] + [f"grad{i}" for i in range(d)])
            with open(os.path.join(directory, name), "w", encoding="utf-8") as fh:
                fh.write(header + "\n")
                for row in table:
                    fh.write(",".join("%.17g" % v for v in row) + "\n")
            files.append({"time": float(t), "file": name})
        manifest = {"s": self.s, "f": self.f_name, "end": self.end, "linear_mode": self.linear_mode,
                    "tol_fix": self.tol_fix, "dt": self.dt, "n_nodes": int(self.lattice.size),
                    "radius": self.lattice.radius, "files": files, "windows": self.picard_trace()}
        if meta:
            manifest.update(meta)
        from .audit import _clean
        with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(_clean(manifest), fh, sort_keys=True, indent=2)
            fh.write("\n")
        return manifest


def _sup(arr: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    a = np.abs(arr)
    if a.ndim == 3:
        a = np.sqrt(np.sum(arr**2, axis=2))
    if mask is not None:
        a = a[:, mask]
    return a.max(axis=1)


def _y_norm(times: np.ndarray, start: float, u: np.ndarray, grad: np.ndarray, mask=None) -> float:
    w = np.sqrt(np.maximum(times - start, 0.0))
    return float(np.max(_sup(u, mask) + w * _sup(grad, mask)))


def y_delta_norm(sol: MildSolution, start: float, end: float, box: Optional[float] = None) -> float:
    """max over solver times in [start, end] of ||u||_inf + sqrt(t - start) ||grad u||_inf."""
    sel = (sol.times >= start - 1e-12) & (sol.times <= end + 1e-12)
    mask = sol.lattice.box_mask(box) if box is not None else None
    return _y_norm(sol.times[sel], start, sol.values[sel], sol.gradients[sel], mask)


def _field_values(f, lattice: Lattice) -> tuple[np.ndarray, str]:
    if isinstance(f, np.ndarray):
        if f.shape != (lattice.size,):
            raise ArgumentError("lattice data has the wrong shape")
        return f.astype(float), "lattice-data"
    vals = np.asarray(f(lattice.nodes), dtype=float).reshape(lattice.size)
    if not np.all(np.isfinite(vals)):
        raise ArgumentError("initial datum is not finite on the lattice")
    return vals, getattr(f, "name", "f")


def _psi_history(nl: Nonlinearity, times: np.ndarray, nodes: np.ndarray, u: np.ndarray, grad: np.ndarray) -> np.ndarray:
    m, n = u.shape
    tt = np.repeat(times, n)
    xx = np.tile(nodes, (m, 1))
    return nl(tt, xx, u.reshape(-1), grad.reshape(m * n, -1)).reshape(m, n)


@dataclass
class _Window:
    times: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    summary: WindowSummary


def _grid_window(op: OperatorFamily, grid: Grid, nl: Nonlinearity, a: float, b: float, u0: np.ndarray,
                 tol_fix: float, initial: str) -> _Window:
    solver = grid_solver(op, grid)
    lat = solver.lattice
    n = step_count(b - a, grid.dt)
    times, linear = solver.propagate(u0, a, b, n_steps=n, store=True)
    grad = lat.gradient(linear)
    if nl.is_zero:
        summary = WindowSummary(a, b, 1, (), _y_norm(times, a, linear, grad), 0, True)
        return _Window(times, linear, grad, summary)
    if initial == "linear":
        u, gu = linear, grad
    elif initial == "zero":
        u = np.zeros_like(linear)
        gu = np.zeros_like(grad)
    else:
        raise ArgumentError(f"unknown initial iterate {initial!r}")
    diffs: list = []
    ratios: list = []
    for it in range(1, MAX_ITER + 1):
        src = _psi_history(nl, times, lat.nodes, u, gu)
        _, new = solver.propagate(u0, a, b, source=src, n_steps=n, store=True)
        gnew = lat.gradient(new)
        diff = _y_norm(times, a, new - u, gnew - gu)
        if diffs and diffs[-1] > 0:
            ratios.append(diff / diffs[-1])
        diffs.append(diff)
        u, gu = new, gnew
        if diff < tol_fix:
            summary = WindowSummary(a, b, it, tuple(ratios), _y_norm(times, a, u, gu), 0, True)
            return _Window(times, u, gu, summary)
        if len(ratios) >= 3 and all(r > STALL_RATIO for r in ratios[-3:]):
            break
    summary = WindowSummary(a, b, len(diffs), tuple(ratios), _y_norm(times, a, u, gu), 0, False)
    return _Window(times, u, gu, summary)


def _generic_window(op: OperatorFamily, backend, nl: Nonlinearity, a: float, b: float, u0: np.ndarray,
                    lat: Lattice, tol_fix: float, initial: str, n_time: int = 8, n_quad: int = 8) -> _Window:
    """Picard iteration with any backend: psi_u frozen per sweep on a coarse time grid, linear in t."""
    times = a + (b - a) * np.arange(n_time + 1) / n_time

    def data(x):
        return lat.interpolate(u0, x)

    linear = np.empty((n_time + 1, lat.size))
    linear[0] = u0
    for j in range(1, n_time + 1):
        linear[j] = g_apply(op, backend, times[j], a, data, lat.nodes).values
    grad = lat.gradient(linear)
    if nl.is_zero:
        return _Window(times, linear, grad, WindowSummary(a, b, 1, (), _y_norm(times, a, linear, grad), 0, True))
    u, gu = (linear, grad) if initial == "linear" else (np.zeros_like(linear), np.zeros_like(grad))
    diffs, ratios = [], []
    for it in range(1, MAX_ITER + 1):
        src = _psi_history(nl, times, lat.nodes, u, gu)

        def source(r, x, src=src):
            j = int(np.clip(np.searchsorted(times, r) - 1, 0, n_time - 1))
            w = (r - times[j]) / (times[j + 1] - times[j])
            return lat.interpolate((1 - w) * src[j] + w * src[j + 1], x)

        new = np.empty_like(linear)
        new[0] = u0
        for j in range(1, n_time + 1):
            z = duhamel_term(op, backend, a, times[j], source, lat.nodes, n_quad=n_quad)
            new[j] = linear[j] + z.values
        gnew = lat.gradient(new)
        diff = _y_norm(times, a, new - u, gnew - gu)
        if diffs and diffs[-1] > 0:
            ratios.append(diff / diffs[-1])
        diffs.append(diff)
        u, gu = new, gnew
        if diff < tol_fix:
            return _Window(times, u, gu, WindowSummary(a, b, it, tuple(ratios), _y_norm(times, a, u, gu), 0, True))
        if len(ratios) >= 3 and all(r > STALL_RATIO for r in ratios[-3:]):
            break
    return _Window(times, u, gu, WindowSummary(a, b, len(diffs), tuple(ratios), _y_norm(times, a, u, gu), 0, False))


def _lattice_for(op: OperatorFamily, backend) -> Lattice:
    if isinstance(backend, Grid):
        return grid_solver(op, backend).lattice
    return Lattice(op.dimension, 4.0, 40)


def picard_window(op: OperatorFamily, backend, nl: Nonlinearity, s: float, f, delta: float,
                  initial: str = "linear", tol_fix: Optional[float] = None) -> MildSolution:
    """One window [s, s + delta]; delta is bisected up to four times when the iteration stalls."""
    if not delta > 0:
        raise ArgumentError("delta must be positive")
    lat = _lattice_for(op, backend)
    u0, fname = _field_values(f, lat)
    tol = tol_fix if tol_fix is not None else 1e-8 * (1.0 + float(np.max(np.abs(u0))))
    win = _solve_window(op, backend, nl, s, s + delta, u0, lat, tol, initial)
    return MildSolution(s, fname, win.times, win.values, win.gradients, lat, (win.summary,), nl.is_zero, tol,
                        float(win.times[1] - win.times[0]))


def _solve_window(op, backend, nl, a, b, u0, lat, tol, initial) -> _Window:
    trace = []
    end = b
    for bisection in range(MAX_BISECTIONS + 1):
        if isinstance(backend, Grid):
            win = _grid_window(op, backend, nl, a, end, u0, tol, initial)
        else:
            win = _generic_window(op, backend, nl, a, end, u0, lat, tol, initial)
        trace.append(win.summary.to_dict())
        if win.summary.converged:
            win.summary = replace(win.summary, bisections=bisection)
            return win
        log.info("Picard stalled on [%g, %g]; bisecting", a, end)
        end = a + 0.5 * (end - a)
    raise WindowFailure(f"Picard iteration failed on [{a}, {b}] after {MAX_BISECTIONS} bisections", a, b, trace)


def evolve(op: OperatorFamily, backend, nl: Nonlinearity, s: float, f, t_end: float, delta: Optional[float] = None,
           initial: str = "linear", tol_fix: Optional[float] = None) -> MildSolution:
    """Chain Picard windows over [s, t_end] through N(t,s) = N(t,r)N(r,s).

    With psi = 0 the whole interval is a single linear sweep, identical to
    the lattice realization of G(t_end, s).
    """
    if not t_end > s:
        raise ArgumentError("need t_end > s")
    op.check_time(s)
    lat = _lattice_for(op, backend)
    u0, fname = _field_values(f, lat)
    tol = tol_fix if tol_fix is not None else 1e-8 * (1.0 + float(np.max(np.abs(u0))))
    step = (t_end - s) if nl.is_zero else (delta or min(1.0, t_end - s))
    times, values, grads, summaries = [], [], [], []
    a = s
    current = u0
    while a < t_end - 1e-12:
        b = min(a + step, t_end)
        if t_end - b < 1e-9 * max(1.0, abs(t_end)):
            b = t_end
        win = _solve_window(op, backend, nl, a, b, current, lat, tol, initial)
        b = float(win.times[-1])
        first = 0 if not times else 1
        times.append(win.times[first:])
        values.append(win.values[first:])
        grads.append(win.gradients[first:])
        summaries.append(win.summary)
        current = win.values[-1]
        a = b
    t_all = np.concatenate(times)
    return MildSolution(s, fname, t_all, np.concatenate(values), np.concatenate(grads), lat, tuple(summaries),
                        nl.is_zero, tol, float(t_all[1] - t_all[0]))


# -- audits -------------------------------------------------------------------

def check_picard(sol: MildSolution, max_ratio: float = 0.55, max_iterations: int = 15) -> AuditRecord:
    """Every window converged in <= max_iterations sweeps with eventual contraction ratio <= max_ratio."""
    lhs, rhs = [], []
    for w in sol.windows:
        lhs += [w.eventual_ratio, float(w.iterations)]
        rhs += [max_ratio, float(max_iterations)]
    rec = make_record("picard", {"s": sol.s, "end": sol.end, "f": sol.f_name}, lhs, rhs, 0.0,
                      {"windows": sol.picard_trace()})
    rec.passed = rec.passed and all(w.converged for w in sol.windows)
    return rec


def uniqueness_gap(first: MildSolution, second: MildSolution) -> float:
    """Y_delta distance between two solves of the same problem, window by window."""
    worst = 0.0
    for w in first.windows:
        sel = (first.times >= w.start - 1e-12) & (first.times <= w.end + 1e-12)
        t = first.times[sel]
        worst = max(worst, _y_norm(t, w.start, first.values[sel] - second.values[sel],
                                   first.gradients[sel] - second.gradients[sel]))
    return worst


def check_local_estimates(sol_f: MildSolution, sol_g: MildSolution, C0: float, psi_zero_sup: float = 0.0,
                          box: Optional[float] = None) -> AuditRecord:
    """Y_delta growth bound for u_f and Lipschitz dependence on the data on the first window."""
    w = sol_f.windows[0]
    delta = w.end - w.start
    mask = sol_f.lattice.box_mask(box) if box is not None else None
    sel = (sol_f.times <= w.end + 1e-12)
    t = sol_f.times[sel]
    # the data norms on the right are taken over the whole lattice
    f0, g0 = sol_f.values[0], sol_g.values[0]
    norm_f = _y_norm(t, w.start, sol_f.values[sel], sol_f.gradients[sel], mask)
    norm_diff = _y_norm(t, w.start, sol_f.values[sel] - sol_g.values[sel],
                        sol_f.gradients[sel] - sol_g.gradients[sel], mask)
    rhs_f = 2 * (1 + 2 * C0 + C0 * math.sqrt(delta)) * (float(np.max(np.abs(f0))) + 2 * delta * psi_zero_sup)
    rhs_diff = 2 * (1 + C0 + C0 * math.sqrt(delta)) * float(np.max(np.abs(f0 - g0)))
    return make_record("local-estimates", {"delta": delta, "C0": C0, "f": sol_f.f_name, "g": sol_g.f_name,
                                           "box": box},
                       [norm_f, norm_diff], [rhs_f, rhs_diff], 1e-9,
                       {"parts": ["growth", "data-dependence"]})


def _lp_on(mu, values: np.ndarray, p: float) -> float:
    return float(mu.weights @ np.abs(values) ** p) ** (1.0 / p)


def lp_profile(sol_f: MildSolution, sol_g: Optional[MildSolution], fam, p: float, times: Sequence[float]) -> np.ndarray:
    """||w(t)||_{L^p(mu_t)} + sqrt(t - s) ||grad w(t)||_{L^p(mu_t)} with w = u_f - u_g (or u_f)."""
    out = []
    for t in times:
        mu = fam.at(t)
        u = sol_f.evaluate(t, mu.nodes)
        gu = sol_f.evaluate_gradient(t, mu.nodes)
        if sol_g is not None:
            u = u - sol_g.evaluate(t, mu.nodes)
            gu = gu - sol_g.evaluate_gradient(t, mu.nodes)
        out.append(_lp_on(mu, u, p) + math.sqrt(max(t - sol_f.s, 0.0)) * _lp_on(mu, np.linalg.norm(gu, axis=1), p))
    return np.array(out)


def lp_constant(tau: float, d1: float, d2: float) -> float:
    """C_tau = (sqrt(tau) + 1) exp(d1 tau^{3/2} + d2)."""
    return (math.sqrt(tau) + 1.0) * math.exp(d1 * tau**1.5 + d2)


def fit_lp_constants(taus: Sequence[float], required: Sequence[float]) -> tuple[float, float]:
    """Smallest (d1, d2) >= 0 in the sum-of-exponents sense with C_tau >= required ratio at every tau."""
    taus = np.asarray(taus, dtype=float)
    y = np.log(np.maximum(np.asarray(required, dtype=float), 1e-300)) - np.log(np.sqrt(taus) + 1.0)
    a_ub = -np.column_stack([taus**1.5, np.ones_like(taus)])
    res = linprog(c=[float(np.sum(taus**1.5)), float(len(taus))], A_ub=a_ub, b_ub=-y,
                  bounds=[(0, None), (0, None)], method="highs")
    if not res.success:
        raise ArgumentError(f"could not fit d1, d2: {res.message}")
    return float(res.x[0]) + 1e-12, float(res.x[1]) + 1e-12


def lp_requirements(sol_f: MildSolution, sol_g: MildSolution, fam, p: float, ends: Sequence[float],
                    n_times: int = 12, psi_seminorm: float = 0.0) -> np.ndarray:
    """Smallest C_{T-s} making both L^p estimates hold up to each end time T."""
    s = sol_f.s
    mu_s = fam.at(s)
    fdiff = _lp_on(mu_s, sol_f.evaluate(s, mu_s.nodes) - sol_g.evaluate(s, mu_s.nodes), p)
    fnorm = _lp_on(mu_s, sol_f.evaluate(s, mu_s.nodes), p)
    req = []
    for T in ends:
        times = s + (T - s) * np.arange(1, n_times + 1) / n_times
        diff = float(np.max(lp_profile(sol_f, sol_g, fam, p, times)))
        own = float(np.max(lp_profile(sol_f, None, fam, p, times)))
        own_rhs = fnorm + (math.sqrt(T - s) + 1.0) * psi_seminorm
        req.append(max(diff / fdiff if fdiff > 0 else 0.0, own / own_rhs if own_rhs > 0 else 0.0))
    return np.array(req)


def check_lp_estimates(sol_f: MildSolution, sol_g: MildSolution, fam, p: float, d1: float, d2: float,
                       ends: Optional[Sequence[float]] = None, n_times: int = 12,
                       psi_seminorm: float = 0.0) -> AuditRecord:
    """Both L^p(mu_t) estimates with C_tau built from frozen (d1, d2)."""
    s = sol_f.s
    ends = list(ends) if ends is not None else [sol_f.end]
    mu_s = fam.at(s)
    fdiff = _lp_on(mu_s, sol_f.evaluate(s, mu_s.nodes) - sol_g.evaluate(s, mu_s.nodes), p)
    fnorm = _lp_on(mu_s, sol_f.evaluate(s, mu_s.nodes), p)
    lhs, rhs = [], []
    for T in ends:
        times = s + (T - s) * np.arange(1, n_times + 1) / n_times
        c = lp_constant(T - s, d1, d2)
        lhs.append(float(np.max(lp_profile(sol_f, sol_g, fam, p, times))))
        rhs.append(c * fdiff)
        lhs.append(float(np.max(lp_profile(sol_f, None, fam, p, times))))
        rhs.append(c * (fnorm + (math.sqrt(T - s) + 1.0) * psi_seminorm))
    lhs, rhs = np.array(lhs), np.array(rhs)
    return make_record("lp-estimates", {"p": p, "d1": d1, "d2": d2, "ends": ends, "f": sol_f.f_name,
                                        "g": sol_g.f_name}, lhs, rhs, 1e-6 * (1 + rhs))


def psi_lp_seminorm(nl: Nonlinearity, fam, p: float, s: float, T: float, n_times: int = 12) -> float:
    """[psi]_{p,T}: sup over (s, T) of sqrt(t - s) ||psi(t,.,0,0)||_{L^p(mu_t)}, by quadrature."""
    if nl.source_free:
        return 0.0
    best = 0.0
    for t in s + (T - s) * np.arange(1, n_times + 1) / n_times:
        mu = fam.at(t)
        best = max(best, math.sqrt(t - s) * _lp_on(mu, nl.at_zero(t, mu.nodes), p))
    return best


def _hessian(lat: Lattice, u: np.ndarray) -> np.ndarray:
    g = lat.gradient(u)
    return np.moveaxis(lat.gradient(np.moveaxis(g, -1, 0)), 0, -2)


def pde_residual(sol: MildSolution, op: OperatorFamily, nl: Nonlinearity, times: Sequence[float],
                 box: Optional[float] = None) -> np.ndarray:
    """max over interior box nodes of |D_t u - A(t)u - psi_u| at solver times nearest to ``times``."""
    lat = sol.lattice
    half = box if box is not None else lat.radius / 2
    mask = lat.box_mask(half) & lat.interior
    nodes = lat.nodes[mask]
    out = []
    for t in times:
        j = int(np.argmin(np.abs(sol.times - t)))
        if j == 0 or j == len(sol.times) - 1:
            raise ArgumentError("residual times must be interior to the solved interval")
        dt_back, dt_fwd = sol.times[j] - sol.times[j - 1], sol.times[j + 1] - sol.times[j]
        du = (sol.values[j + 1] - sol.values[j - 1]) / (dt_back + dt_fwd)
        u = sol.values[j]
        g = sol.gradients[j]
        h = _hessian(lat, u)
        tj = float(sol.times[j])
        q = op.Q(tj, nodes)
        b = op.b(tj, nodes)
        au = np.einsum("nij,nij->n", q, h[mask]) + np.einsum("ni,ni->n", b, g[mask])
        psi = nl(np.full(len(nodes), tj), nodes, u[mask], g[mask])
        out.append(float(np.max(np.abs(du[mask] - au - psi))))
    return np.array(out)


def check_pde_residual(solutions: Sequence[MildSolution], op: OperatorFamily, nl: Nonlinearity,
                       times: Sequence[float], box: Optional[float] = None, min_order: float = 1.7) -> AuditRecord:
    """Residual r_k <= C_res (h_k^2 + dt_k^2) 2^{(2 - min_order) k} along a halving sequence of solves.

    C_res is fixed on the coarsest solve; the growth factor turns the check into
    an observed order of at least ``min_order`` per halving.
    """
    res = np.array([float(np.max(pde_residual(sol, op, nl, times, box))) for sol in solutions])
    scales = np.array([sol.lattice.h**2 + sol.dt**2 for sol in solutions])
    c_res = res[0] / scales[0] if scales[0] > 0 else 0.0
    rhs = c_res * scales * 2.0 ** ((2.0 - min_order) * np.arange(len(res)))
    orders = [float(np.log2(res[k] / res[k + 1])) if res[k + 1] > 0 else float("inf") for k in range(len(res) - 1)]
    return make_record("pde-residual", {"times": list(map(float, times)), "min_order": min_order,
                                        "levels": len(solutions)},
                       res, rhs, 1e-13, {"C_res": c_res, "residuals": res.tolist(), "observed_orders": orders,
                                         "h": [s.lattice.h for s in solutions], "dt": [s.dt for s in solutions]})


def check_evolution_law(op: OperatorFamily, grid: Grid, nl: Nonlinearity, f, s: float, r: float, t: float,
                        points=None, initial: str = "linear") -> AuditRecord:
    """||N(t,s)f - N(t,r)N(r,s)f|| against twice the Richardson estimate of a single solve."""
    if not s < r < t:
        raise ArgumentError("need s < r < t")
    direct = evolve(op, grid, nl, s, f, t, initial=initial)
    first = evolve(op, grid, nl, s, f, r, initial=initial)
    composed = evolve(op, grid, nl, r, first.values[-1], t, initial=initial)
    fine = evolve(op, grid.refined(2), nl, s, f, t, initial=initial)
    lat = direct.lattice
    half = lat.radius / 2
    pts = lat.nodes[lat.box_mask(half)] if points is None else as_points(points, op.dimension)
    a = lat.interpolate(direct.values[-1], pts)
    diff = np.abs(a - lat.interpolate(composed.values[-1], pts))
    rich = 4.0 / 3.0 * np.abs(a - fine.evaluate(t, pts))
    tol = 2.0 * float(np.max(rich)) + 10 * direct.tol_fix
    return make_record("evolution-law", {"s": s, "r": r, "t": t, "f": direct.f_name, "psi": nl.name},
                       float(np.max(diff)), 0.0, tol, {"richardson_max": float(np.max(rich))})


def check_continuity_in_data(op: OperatorFamily, backend, nl: Nonlinearity, f_seq: Sequence, f_lim, s: float,
                             t: float, box: tuple, tol: float = 0.05, noise: float = 1e-6) -> AuditRecord:
    """sup over a box of |N(t,s)f_n - N(t,s)f| and of the gradient gap: non-increasing up to noise, final < tol."""
    lo, hi = box
    axis = np.linspace(lo, hi, 41)
    pts = np.stack(np.meshgrid(*([axis] * op.dimension), indexing="ij"), -1).reshape(-1, op.dimension)
    ref = evolve(op, backend, nl, s, f_lim, t)
    u_ref = ref.evaluate(t, pts)
    g_ref = ref.evaluate_gradient(t, pts)
    gaps, ggaps = [], []
    for fn in f_seq:
        sol = evolve(op, backend, nl, s, fn, t)
        gaps.append(float(np.max(np.abs(sol.evaluate(t, pts) - u_ref))))
        ggaps.append(float(np.max(np.linalg.norm(sol.evaluate_gradient(t, pts) - g_ref, axis=1))))
    lhs, rhs = [], []
    for seq in (gaps, ggaps):
        for k in range(1, len(seq)):
            lhs.append(seq[k])
            rhs.append(seq[k - 1] * (1 + 1e-3))
        lhs.append(seq[-1])
        rhs.append(tol)
    return make_record("continuity-in-data", {"s": s, "t": t, "box": list(box), "n_terms": len(f_seq),
                                              "tol": tol}, lhs, rhs, noise,
                       {"sup_gaps": gaps, "gradient_gaps": ggaps})


def mollified_data(values: Callable[[np.ndarray], np.ndarray], lattice: Lattice, level: int) -> np.ndarray:
    """Bounded smooth approximant of L^p data: truncation at +-level and a Gaussian blur of width 1/level."""
    raw = np.clip(np.asarray(values(lattice.nodes), dtype=float).reshape(lattice.size), -level, level)
    if lattice.dimension != 1:
        from scipy.ndimage import gaussian_filter
        grid = raw.reshape(lattice.shape)
        return gaussian_filter(grid, sigma=1.0 / (level * lattice.h), mode="nearest").ravel()
    x = lattice.axis
    width = 1.0 / level
    kern = np.exp(-0.5 * ((x[:, None] - x[None, :]) / width) ** 2)
    kern /= kern.sum(axis=1, keepdims=True)
    return kern @ raw


def evolve_lp(op: OperatorFamily, grid: Grid, nl: Nonlinearity, s: float, values, t_end: float,
              levels: Sequence[int] = (2, 4, 8, 16)) -> list:
    """Solutions for the mollified approximants of L^p data; their limit is the L^p mild solution."""
    lat = grid_solver(op, grid).lattice
    return [evolve(op, grid, nl, s, mollified_data(values, lat, n), t_end) for n in levels]


Datum = Union[Field, Callable[[np.ndarray], np.ndarray], np.ndarray]
