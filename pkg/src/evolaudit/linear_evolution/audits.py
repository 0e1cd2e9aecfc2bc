"""Audits of the linear evolution operator."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..audit import AuditRecord, make_record
from ..errors import ArgumentError
from ..fields import Field, as_points
from ..operator_model import (DissipativityData, EllipticityCertificate, OperatorFamily, SampleSet,
                              compute_sigma_p, sample_box)
from .backends import Grid, MonteCarlo
from .evolution import Backend, g_apply, g_apply_many, g_gradient, grid_solver, lattice_solution


def _backend_params(backend: Backend) -> dict:
    if isinstance(backend, Grid):
        return {"backend": "grid", "radius": backend.radius, "n_cells": backend.n_cells, "dt": backend.dt}
    return {"backend": "montecarlo", "n_paths": backend.n_paths, "dt": backend.dt, "seed": backend.seed}


def check_contraction(op: OperatorFamily, backend: Backend, t: float, s: float, f: Field, points,
                      sup_norm: Optional[float] = None, box: Optional[float] = None) -> AuditRecord:
    """max |G(t,s)f| <= ||f||_inf (1 + tol) + 3 SE, tol = 1e-6 on a grid and 0 for Monte Carlo.

    When f is unbounded, pass ``box`` to take the sup norm over [-box, box]^d;
    the record is then flagged as box-relative.
    """
    pts = as_points(points, op.dimension)
    box_relative = False
    if sup_norm is None:
        sup_norm = f.sup_norm
        if not np.isfinite(sup_norm):
            if box is None:
                raise ArgumentError(f"field {f.name} is unbounded; supply sup_norm or a box")
            axis = np.linspace(-box, box, 401)
            mesh = np.stack(np.meshgrid(*([axis] * op.dimension), indexing="ij"), -1).reshape(-1, op.dimension)
            sup_norm = float(np.max(np.abs(f(mesh))))
            box_relative = True
    sample = g_apply(op, backend, t, s, f, pts)
    tol = 1e-6 if isinstance(backend, Grid) else 0.0
    lhs = np.abs(sample.values)
    slack = sup_norm * tol + 3 * sample.std_errors
    params = {"operator": op.name, "f": f.name, "s": s, "t": t, **_backend_params(backend)}
    details = {"sup_norm_f": sup_norm, "box_relative": box_relative, "warnings": sample.warnings}
    return make_record("contraction", params, lhs, np.full(len(lhs), sup_norm), slack, details)


def sigma_for_gradient(op: OperatorFamily, diss: DissipativityData, p: float, samples: SampleSet,
                       ell: Optional[EllipticityCertificate] = None) -> float:
    """sigma_p for p >= p0, or sigma_1 = sup r when the diffusion is constant in x."""
    if p == 1.0:
        if not op.constant_diffusion:
            raise ArgumentError("p = 1 needs a bounded diffusion matrix independent of x")
        return max(float(np.max(diss.r(op, t, samples.points))) for t in samples.times)
    return compute_sigma_p(op, diss, p, samples, ell).value


def check_gradient_estimate(op: OperatorFamily, diss: DissipativityData, backend: Backend, p: float, t: float,
                            s: float, f: Field, points, sigma_p: Optional[float] = None,
                            samples: Optional[SampleSet] = None,
                            ell: Optional[EllipticityCertificate] = None) -> AuditRecord:
    """|grad G(t,s)f|^p <= e^{p sigma_p (t-s)} G(t,s)|grad f|^p at every point.

    Slack is 3 combined standard errors plus 1e-6 relative; on a lattice the
    Richardson estimate of both sides' discretization error is added.
    """
    pts = as_points(points, op.dimension)
    if sigma_p is None:
        samples = samples or sample_box(op.dimension, s, t, max(8.0, 2 * float(np.max(np.abs(pts)))))
        sigma_p = sigma_for_gradient(op, diss, p, samples, ell)
    factor = np.exp(p * sigma_p * (t - s))

    def sides(b):
        grad = g_gradient(op, b, t, s, f, pts)
        rhs_sample = g_apply(op, b, t, s, f.grad_norm_power(p), pts)
        norm = np.linalg.norm(grad.gradient_values, axis=1)
        norm_se = np.linalg.norm(grad.gradient_std_errors, axis=1)
        lhs_se = p * norm ** (p - 1) * norm_se if p != 1 else norm_se
        return norm**p, lhs_se, factor * rhs_sample.values, factor * rhs_sample.std_errors

    lhs, lhs_se, rhs, rhs_se = sides(backend)
    slack = 3 * np.sqrt(lhs_se**2 + rhs_se**2) + 1e-6 * np.abs(rhs)
    discretization = 0.0
    if isinstance(backend, Grid):
        # a lattice has no sampling error; its discretization error is estimated by Richardson instead
        fine_lhs, _, fine_rhs, _ = sides(backend.refined(2))
        discretization = 4.0 / 3.0 * (np.abs(lhs - fine_lhs) + np.abs(rhs - fine_rhs))
        slack = slack + discretization
    ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)
    params = {"operator": op.name, "f": f.name, "p": p, "s": s, "t": t, "sigma_p": sigma_p,
              **_backend_params(backend)}
    details = {"max_lhs_over_rhs": float(np.max(ratio)) if len(ratio) else 0.0,
               "max_discretization_error": float(np.max(discretization))}
    return make_record("gradient-estimate", params, lhs, rhs, slack, details)


def richardson_error(op: OperatorFamily, grid: Grid, t: float, s: float, f: Field, points) -> np.ndarray:
    """Estimated error of the coarse solve from a second solve with mesh and step halved."""
    pts = as_points(points, op.dimension)
    coarse = g_apply(op, grid, t, s, f, pts).values
    fine = g_apply(op, grid.refined(2), t, s, f, pts).values
    return 4.0 / 3.0 * np.abs(coarse - fine)


def check_evolution_law_linear(op: OperatorFamily, backend: Backend, s: float, r: float, t: float, f: Field,
                               points, aux_points: int = 81) -> AuditRecord:
    """||G(t,s)f - G(t,r)G(r,s)f|| over points against a reported discretization tolerance."""
    if not s < r < t:
        raise ArgumentError("need s < r < t")
    pts = as_points(points, op.dimension)
    params = {"operator": op.name, "f": f.name, "s": s, "r": r, "t": t, **_backend_params(backend)}
    if isinstance(backend, Grid):
        solver = grid_solver(op, backend)
        direct = lattice_solution(op, backend, t, s, [f])[:, 0]
        middle = lattice_solution(op, backend, r, s, [f])[:, 0]
        composed = solver.propagate(middle, r, t)
        lat = solver.lattice
        diff = np.abs(lat.interpolate(direct, pts) - lat.interpolate(composed, pts))
        tol = 2.0 * richardson_error(op, backend, t, s, f, pts) + 1e-12
        return make_record("evolution-law-linear", params, diff, np.zeros(len(pts)), tol,
                           {"tolerance": "2x Richardson estimate of the single-solve error"})
    # Monte Carlo: G(r,s)f is tabulated on an auxiliary lattice and interpolated.
    from .grid import Lattice
    half = max(4.0, 2.0 * float(np.max(np.abs(pts))))
    lat = Lattice(op.dimension, half, aux_points - 1)
    inner = g_apply(op, backend, r, s, f, lat.nodes)
    table = inner.values

    def middle(x):
        return lat.interpolate(table, x)

    direct = g_apply(op, backend, t, s, f, pts)
    composed = g_apply(op, backend, t, r, middle, pts)
    # interpolation error bound from the spread between linear and cubic interpolation
    lin = np.interp(lat.nodes[:, 0] + lat.h / 2, lat.nodes[:, 0], table) if op.dimension == 1 else None
    interp_err = float(np.max(np.abs(lin - middle(lat.nodes + lat.h / 2)))) if lin is not None else 0.0
    diff = np.abs(direct.values - composed.values)
    tol = 3 * (direct.std_errors + composed.std_errors + float(np.max(inner.std_errors))) + interp_err
    return make_record("evolution-law-linear", params, diff, np.zeros(len(pts)), tol,
                       {"tolerance": "3 SE of both sides plus auxiliary-table error"})


def fit_gradient_constant(op: OperatorFamily, backend: Backend, s: float, taus: Sequence[float],
                          fields: Sequence[Field], points) -> dict:
    """Empirical C0 with |grad G(t,s)f| <= C0 (1 + (t-s)^{-1/2}) ||f||_inf on the calibration set."""
    pts = as_points(points, op.dimension)
    best = 0.0
    where = None
    for tau in taus:
        for f in fields:
            grad = g_gradient(op, backend, s + tau, s, f, pts)
            norm = np.linalg.norm(grad.gradient_values, axis=1)
            if isinstance(backend, MonteCarlo):
                norm = norm + 3 * np.linalg.norm(grad.gradient_std_errors, axis=1)
            ratio = float(np.max(norm)) / ((1 + tau**-0.5) * f.sup_norm)
            if ratio > best:
                best, where = ratio, (tau, f.name)
    return {"C0": best, "argmax": where, "taus": list(taus), "fields": [f.name for f in fields]}


def jensen_gap(op: OperatorFamily, backend: Backend, t: float, s: float, f: Field, p: float, points) -> np.ndarray:
    """G|f|^p - |Gf|^p at the points (non-negative up to discretization and noise)."""
    pts = as_points(points, op.dimension)
    inner, outer = g_apply_many(op, backend, t, s, [f, f.power_abs(p)], pts)
    return outer.values - np.abs(inner.values) ** p
