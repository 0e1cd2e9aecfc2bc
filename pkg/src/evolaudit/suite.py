"""Named audits runnable from a configuration, and the default full suite."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .audit import AuditRecord, make_record
from .config import RunConfig
from .fields import BOUNDED_TEST_FIELDS, Field, affine, library, sine
from .inequalities import (HyperParams, check_formulas, check_gradient_hyper, check_harnack,
                           check_hypercontractivity, check_stability, check_stability_sup,
                           check_supercontractivity, check_ultraboundedness, check_ultraboundedness_gradient,
                           fit_sup_gradient_constant)
from .linear_evolution import (Grid, MonteCarlo, check_contraction, check_evolution_law_linear,
                               check_gradient_estimate, fit_gradient_constant, sigma_for_gradient)
from .measures import (NuFunction, SeparableField, check_invariance, check_logsobolev, check_lsi_epsilon,
                       check_measure_derivative, check_tightness, dilated_exponentials,
                       estimate_logsobolev_constant)
from .operator_model import sample_box, verify_hypotheses
from .semilinear import (MildSolution, check_continuity_in_data, check_duhamel_bound, check_evolution_law,
                         check_local_estimates, check_lp_estimates, check_nonlinearity_certificates,
                         check_pde_residual, check_picard, duhamel_term, evolve, fit_lp_constants,
                         lp_requirements, psi_lp_seminorm, uniqueness_gap)

MEASURE_SEED = 0


class AuditContext:
    """Shared, cached state for one audit run: problem, backends, measures and solves."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.problem = config.build_problem()
        self.bench = self.problem.benchmark
        self.op = self.bench.operator
        self.nl = self.problem.nonlinearity
        self.backend = config.build_backend()
        self.grid = config.solver_grid()
        self.s = config.problem["s"]
        self.t_end = config.problem["t_end"]
        self.fields = library(self.op.dimension)
        self._family = None
        self._solutions: dict = {}
        self._lsi: Optional[float] = None

    @property
    def family(self):
        if self._family is None:
            m = self.config.measure
            mc = MonteCarlo(n_paths=m["n_particles"], dt=1e-2, seed=MEASURE_SEED)
            self._family = self.bench.measure_family(m["t_lo"], m["t_hi"], m.get("horizon"), mc, m["n_particles"])
        return self._family

    def field(self, name: str) -> Field:
        return self.fields[name]

    @property
    def datum(self) -> Field:
        return self.field(self.config.problem["datum"])

    def solve(self, f=None, t_end: Optional[float] = None, nl=None, grid: Optional[Grid] = None,
              initial: str = "linear", key: Optional[str] = None) -> MildSolution:
        f = self.datum if f is None else f
        t_end = self.t_end if t_end is None else t_end
        nl = self.nl if nl is None else nl
        grid = self.grid if grid is None else grid
        k = (key or getattr(f, "name", repr(f)), t_end, nl.name, grid, initial)
        if k not in self._solutions:
            self._solutions[k] = evolve(self.op, grid, nl, self.s, f, t_end, initial=initial)
        return self._solutions[k]

    def lsi_constant(self) -> float:
        """K for the log-Sobolev inequality: estimated on dilated exponentials, inflated by 1.5."""
        if self._lsi is None:
            t_mid = 0.5 * (self.s + self.t_end)
            self._lsi = 1.5 * estimate_logsobolev_constant(self.family, t_mid, dilated_exponentials(self.op.dimension),
                                                            2.0)
        return self._lsi

    def hyper_params(self, p: float = 2.0, gamma: float = 2.0) -> HyperParams:
        return HyperParams.from_nonlinearity(self.nl, p=p, gamma=gamma, kappa0=self.bench.kappa0,
                                             K=self.lsi_constant(), sigma1=self.bench.sigma1)

    def box_points(self, n: int = 9, half: float = 4.0) -> np.ndarray:
        return np.linspace(-half, half, n).reshape(-1, 1) if self.op.dimension == 1 else \
            np.stack(np.meshgrid(*([np.linspace(-half, half, 5)] * self.op.dimension), indexing="ij"),
                     -1).reshape(-1, self.op.dimension)


@dataclass(frozen=True)
class AuditSpec:
    run: Callable[..., list]
    parameters: dict
    description: str


def _pairs(ctx, pairs):
    return [(ctx.s + a, ctx.s + b) for a, b in pairs]


def audit_hypotheses(ctx, radius, n_t, n_x):
    samples = sample_box(ctx.op.dimension, ctx.s, ctx.t_end, radius, n_t=n_t, n_x=n_x)
    rep = verify_hypotheses(ctx.op, ctx.bench.ellipticity, ctx.bench.lyapunov, ctx.bench.dissipativity, samples)
    out = []
    for e in rep.entries:
        rec = make_record(f"hypothesis-{e.name}", {"operator": ctx.op.name, "radius": radius, "n_t": n_t, "n_x": n_x},
                          -e.worst_slack, 0.0, 0.0, {"where": e.where, **e.detail})
        rec.passed = e.passed
        out.append(rec)
    return out


def audit_nonlinearity(ctx, n_samples, seed):
    rec, _ = check_nonlinearity_certificates(ctx.nl, ctx.op.dimension, (ctx.s, ctx.t_end), n_samples, seed)
    return [rec]


def audit_contraction(ctx, fields, pairs, half_width):
    pts = ctx.box_points(half=half_width)
    return [check_contraction(ctx.op, ctx.backend, t, s, ctx.field(f), pts)
            for s, t in _pairs(ctx, pairs) for f in fields]


def audit_gradient_estimate(ctx, powers, fields, pairs, half_width):
    pts = ctx.box_points(half=half_width)
    out = []
    for p in powers:
        if p == 1.0 and not ctx.op.constant_diffusion:
            continue
        samples = sample_box(ctx.op.dimension, ctx.s, ctx.t_end, max(8.0, 2 * half_width))
        sigma = sigma_for_gradient(ctx.op, ctx.bench.dissipativity, float(p), samples, ctx.bench.ellipticity)
        for s, t in _pairs(ctx, pairs):
            for f in fields:
                out.append(check_gradient_estimate(ctx.op, ctx.bench.dissipativity, ctx.backend, float(p), t, s,
                                                   ctx.field(f), pts, sigma_p=sigma))
    return out


def audit_evolution_law_linear(ctx, triples, field):
    pts = ctx.box_points()
    return [check_evolution_law_linear(ctx.op, ctx.backend, ctx.s + a, ctx.s + b, ctx.s + c, ctx.field(field), pts)
            for a, b, c in triples]


def audit_invariance(ctx, fields, pairs):
    return [check_invariance(ctx.op, ctx.backend, ctx.family, t, s, ctx.field(f))
            for s, t in _pairs(ctx, pairs) for f in fields]


def audit_measure_derivative(ctx, r_lo, r_hi, n_times, field):
    fld = SeparableField(np.cos, lambda r: -np.sin(r), ctx.field(field), f"cos(r)*{field}")
    return [check_measure_derivative(ctx.op, ctx.family, fld, list(np.linspace(r_lo, r_hi, n_times)))]


def audit_logsobolev(ctx, t, q):
    K = ctx.lsi_constant()
    return [check_logsobolev(ctx.family, ctx.s + t, f, q, K) for f in dilated_exponentials(ctx.op.dimension)]


def audit_tightness(ctx, t_grid, radius_grid, eps):
    return [check_tightness(ctx.family, [ctx.s + t for t in t_grid], radius_grid, eps)]


def audit_duhamel(ctx, t, gamma_sing, field):
    g = ctx.field(field)
    s = ctx.s

    def source(r, x):
        return (r - s) ** (-gamma_sing) * g(x)

    z = duhamel_term(ctx.op, ctx.backend, s, s + t, source, ctx.box_points())
    return [check_duhamel_bound(z, s, s + t, gamma_sing, g.sup_norm)]


def audit_picard(ctx, max_ratio, max_iterations):
    sol = ctx.solve()
    rec = check_picard(sol, max_ratio, max_iterations)
    restart = ctx.solve(initial="zero")
    gap = uniqueness_gap(sol, restart)
    uniq = make_record("uniqueness", {"f": sol.f_name, "initial_iterates": ["linear", "zero"]}, gap,
                       2 * sol.tol_fix, 0.0, {"tol_fix": sol.tol_fix})
    return [rec, uniq]


def audit_local_estimates(ctx, shift, taus, box):
    f = ctx.datum
    g = affine(f, shift, 1.0)
    grid = ctx.grid
    c0 = fit_gradient_constant(ctx.op, grid, ctx.s, taus, [ctx.field(n) for n in BOUNDED_TEST_FIELDS if n != "one"],
                               ctx.box_points())["C0"]
    sol_f = ctx.solve(f)
    sol_g = ctx.solve(g)
    psi0 = float(np.max(np.abs(ctx.nl.at_zero(np.full(len(sol_f.lattice.nodes), ctx.s), sol_f.lattice.nodes))))
    psi0 = max(psi0, ctx.nl.xi0 if not ctx.nl.source_free else 0.0)
    half = sol_f.lattice.radius / 2 if box is None else box
    return [check_local_estimates(sol_f, sol_g, c0, psi0, half)]


def audit_lp_estimates(ctx, p, calibration_ends, validation_ends, calibration_shift, validation_shift):
    f = ctx.datum
    fam = ctx.family
    seminorm = psi_lp_seminorm(ctx.nl, fam, p, ctx.s, ctx.t_end)
    cal_f, cal_g = ctx.solve(f), ctx.solve(affine(f, calibration_shift, 1.0))
    req = lp_requirements(cal_f, cal_g, fam, p, [ctx.s + e for e in calibration_ends], psi_seminorm=seminorm)
    d1, d2 = fit_lp_constants(calibration_ends, req)
    val_g = ctx.solve(affine(f, validation_shift, 1.0))
    rec = check_lp_estimates(cal_f, val_g, fam, p, d1, d2, [ctx.s + e for e in validation_ends],
                             psi_seminorm=seminorm)
    rec.details.update({"calibration_requirements": req.tolist(), "psi_seminorm": seminorm})
    return [rec]


def audit_pde_residual(ctx, levels, n_cells, dt, t_end, times):
    base = ctx.grid
    grids = [Grid(radius=base.radius, n_cells=n_cells * 2**k, dt=dt / 2**k) for k in range(levels)]
    sols = [ctx.solve(t_end=ctx.s + t_end, grid=g) for g in grids]
    return [check_pde_residual(sols, ctx.op, ctx.nl, [ctx.s + t for t in times])]


def audit_continuity(ctx, t, box, n_terms, tol):
    f = ctx.datum
    # f_n = f + sin(n x)/n: bounded and pointwise convergent to f
    seq = [_sum_fields(f, sine(0, freq=float(n), amplitude=1.0 / n, dimension=ctx.op.dimension))
           for n in (2**k for k in range(n_terms))]
    return [check_continuity_in_data(ctx.op, ctx.grid, ctx.nl, seq, f, ctx.s, ctx.s + t, tuple(box), tol)]


def _sum_fields(a: Field, b: Field) -> Field:
    return Field(a.dimension, lambda x: a.value(x) + b.value(x), lambda x: a.grad(x) + b.grad(x),
                 lambda x: a.hess(x) + b.hess(x), name=f"{a.name}+{b.name}", sup_norm=a.sup_norm + b.sup_norm)


def audit_evolution_law(ctx, triples):
    return [check_evolution_law(ctx.op, ctx.grid, ctx.nl, ctx.datum, ctx.s + a, ctx.s + b, ctx.s + c)
            for a, b, c in triples]


def audit_hypercontractivity(ctx, p, gamma, taus):
    hp = ctx.hyper_params(p, gamma)
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + max(taus)))
    return [check_hypercontractivity(sol, ctx.family, hp, ctx.s + tau) for tau in taus]


def audit_gradient_hyper(ctx, p, gamma, tau_lo, tau_hi, n_calibration):
    hp = ctx.hyper_params(p, gamma)
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + tau_hi))
    cal = ctx.s + np.linspace(tau_lo, tau_hi, n_calibration)
    val = 0.5 * (cal[1:] + cal[:-1])
    return [check_gradient_hyper(sol, ctx.family, hp, cal, val)]


def audit_supercontractivity(ctx, p, q, taus, nu_c1, nu_c2):
    hp = ctx.hyper_params(p)
    nu = NuFunction("rational", nu_c1, nu_c2)
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + max(taus)))
    out = [check_supercontractivity(sol, ctx.family, hp, p, q, ctx.s + tau, nu) for tau in taus]
    # the defective log-Sobolev inequality at the sigma values the constants use
    sigmas = [hp.kappa0 * tau / (2 * math.log(q - 1) - 2 * math.log(p - 1)) for tau in taus]
    t_mid = 0.5 * (ctx.s + sol.end)
    out += [check_lsi_epsilon(ctx.family, t_mid, f, p, sigmas, nu) for f in dilated_exponentials(ctx.op.dimension)]
    return out


def audit_harnack(ctx, powers, taus, x_half, n_points):
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + max(taus)))
    axis = np.linspace(-x_half, x_half, n_points)
    out = []
    for p in powers:
        hp = ctx.hyper_params(p)
        for tau in taus:
            out.append(check_harnack(sol, ctx.op, ctx.grid, hp, ctx.datum, p, ctx.s + tau, axis, axis))
    return out


def audit_ultraboundedness(ctx, p, taus):
    hp = ctx.hyper_params(p)
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + max(taus)))
    pts = np.linspace(-2, 2, 5)
    return [check_ultraboundedness(sol, ctx.op, ctx.family, hp, p, ctx.s + tau, ctx.grid, pts) for tau in taus]


def audit_ultraboundedness_gradient(ctx, p, taus):
    hp = ctx.hyper_params(p)
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + max(taus)))
    pts = np.linspace(-2, 2, 5)
    out = []
    for tau in taus:
        # calibrate the sup-norm gradient constant on bounded fields other than the datum, then freeze
        calib = [ctx.solve(ctx.field(n), t_end=ctx.s + tau / 2) for n in ("tanh", "bump", "wave")
                 if n != ctx.config.problem["datum"]]
        c_half = fit_sup_gradient_constant(calib, tau / 2, ctx.nl.xi0)
        out.append(check_ultraboundedness_gradient(sol, ctx.op, ctx.family, hp, p, ctx.s + tau, ctx.grid, pts,
                                                   c_half))
    return out


def audit_stability(ctx, p, orders, tau_lo, tau_hi, n_times):
    hp = ctx.hyper_params(p)
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + tau_hi))
    grid = list(ctx.s + np.linspace(tau_lo, tau_hi, n_times))
    return [check_stability(sol, ctx.family, hp, ctx.nl, p, j, grid) for j in orders]


def audit_stability_sup(ctx, orders, tau_lo, tau_hi, n_times):
    hp = ctx.hyper_params()
    sol = ctx.solve(t_end=max(ctx.t_end, ctx.s + tau_hi))
    grid = list(ctx.s + np.linspace(tau_lo, tau_hi, n_times))
    return [check_stability_sup(sol, hp, ctx.nl, j, grid) for j in orders]


def audit_formulas(ctx):
    return [check_formulas()]


FIELDS5 = list(BOUNDED_TEST_FIELDS)

REGISTRY: dict = {
    "hypotheses": AuditSpec(audit_hypotheses, {"radius": 4.0, "n_t": 9, "n_x": 41},
                            "sampled audit of the operator certificates"),
    "nonlinearity-certificates": AuditSpec(audit_nonlinearity, {"n_samples": 20000, "seed": 0},
                                           "sign, Lipschitz and psi(.,.,0,0) certificates of psi"),
    "contraction": AuditSpec(audit_contraction, {"fields": FIELDS5, "pairs": [[0.0, 0.5], [0.0, 2.0]],
                                                 "half_width": 4.0}, "sup-norm contraction of G"),
    "gradient-estimate": AuditSpec(audit_gradient_estimate, {"powers": [1.0, 2.0], "fields": ["sin", "tanh", "bump"],
                                                             "pairs": [[0.0, 0.5], [0.0, 1.0]], "half_width": 3.0},
                                   "pointwise gradient estimate for G"),
    "evolution-law-linear": AuditSpec(audit_evolution_law_linear, {"triples": [[0.0, 0.5, 1.0]], "field": "sin"},
                                      "evolution law for G"),
    "invariance": AuditSpec(audit_invariance, {"fields": FIELDS5, "pairs": [[0.0, 0.5], [0.0, 1.0], [0.5, 2.0]]},
                            "invariance of the measure family"),
    "measure-derivative": AuditSpec(audit_measure_derivative, {"r_lo": 0.5, "r_hi": 5.0, "n_times": 20,
                                                               "field": "wave"},
                                    "time derivative of integrals against mu_r"),
    "logsobolev": AuditSpec(audit_logsobolev, {"t": 1.0, "q": 2.0}, "log-Sobolev inequality with inflated K"),
    "tightness": AuditSpec(audit_tightness, {"t_grid": [0.0, 1.0, 2.0, 4.0], "radius_grid": [1.0, 2.0, 3.0, 4.0, 6.0],
                                             "eps": [0.1, 0.01]}, "tightness of the measure family"),
    "duhamel-bound": AuditSpec(audit_duhamel, {"t": 1.0, "gamma_sing": 0.5, "field": "sin"},
                               "singular Duhamel quadrature bound"),
    "picard": AuditSpec(audit_picard, {"max_ratio": 0.55, "max_iterations": 60},
                        "Picard contraction and uniqueness of the fixed point"),
    "local-estimates": AuditSpec(audit_local_estimates, {"shift": 0.01, "taus": [0.05, 0.1, 0.25, 0.5, 1.0],
                                                         "box": None},
                                 "Y_delta bounds on the first window"),
    "lp-estimates": AuditSpec(audit_lp_estimates, {"p": 2.0, "calibration_ends": [0.5, 1.0, 2.0, 3.0],
                                                   "validation_ends": [0.75, 1.5, 2.5], "calibration_shift": 0.1,
                                                   "validation_shift": 0.01},
                              "L^p(mu_t) bounds with frozen (d1, d2)"),
    "pde-residual": AuditSpec(audit_pde_residual, {"levels": 3, "n_cells": 128, "dt": 4e-3, "t_end": 1.2,
                                                   "times": [0.5, 1.0]}, "classical-solution residual"),
    "continuity-in-data": AuditSpec(audit_continuity, {"t": 1.0, "box": [-2.0, 2.0], "n_terms": 5, "tol": 0.05},
                                    "continuity of N(t,s) in the datum"),
    "evolution-law": AuditSpec(audit_evolution_law, {"triples": [[0.0, 0.5, 1.0], [0.0, 1.0, 2.0], [0.5, 1.0, 1.5],
                                                                 [0.0, 0.3, 1.0], [1.0, 1.5, 2.5]]},
                               "evolution law for N"),
    "hypercontractivity": AuditSpec(audit_hypercontractivity, {"p": 2.0, "gamma": 2.0,
                                                               "taus": [0.25, 0.5, 1.0, 2.0]},
                                    "hypercontractivity with exponent p_gamma(t)"),
    "gradient-hyper": AuditSpec(audit_gradient_hyper, {"p": 2.0, "gamma": 2.0, "tau_lo": 0.1, "tau_hi": 3.0,
                                                       "n_calibration": 30},
                                "gradient hypercontractivity, calibrate then validate"),
    "supercontractivity": AuditSpec(audit_supercontractivity, {"p": 2.0, "q": 4.0, "taus": [0.5, 1.0, 2.0],
                                                               "nu_c1": 1.0, "nu_c2": 1.0},
                                    "supercontractivity with explicit c2"),
    "harnack": AuditSpec(audit_harnack, {"powers": [1.5, 2.0], "taus": [0.5, 1.0], "x_half": 2.0, "n_points": 5},
                         "Harnack estimate on a point grid"),
    "ultraboundedness": AuditSpec(audit_ultraboundedness, {"p": 2.0, "taus": [1.0, 2.0]},
                                  "ultraboundedness with explicit c4, c5"),
    "ultraboundedness-gradient": AuditSpec(audit_ultraboundedness_gradient, {"p": 2.0, "taus": [1.0, 2.0]},
                                           "gradient ultraboundedness with explicit c6, c7"),
    "stability": AuditSpec(audit_stability, {"p": 2.0, "orders": [0, 1], "tau_lo": 1.0, "tau_hi": 4.0,
                                             "n_times": 13}, "decay of the null solution in L^p(mu_t)"),
    "stability-sup": AuditSpec(audit_stability_sup, {"orders": [0, 1], "tau_lo": 1.0, "tau_hi": 4.0, "n_times": 13},
                               "decay of the null solution in sup norm"),
    "formulas": AuditSpec(audit_formulas, {}, "closed-form identities of the exponents and rates"),
}

FULL_SUITE = tuple(REGISTRY)


def run_audits(config: RunConfig, ctx: Optional[AuditContext] = None) -> list[AuditRecord]:
    """Run every configured audit in order and collect the records."""
    ctx = ctx or AuditContext(config)
    records = []
    for name, overrides in config.audits:
        spec = REGISTRY[name]
        params = {**spec.parameters, **overrides}
        records += spec.run(ctx, **params)
    return records
