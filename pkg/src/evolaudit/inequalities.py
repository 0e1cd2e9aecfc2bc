"""Regularization and stability estimates for N(t,s): formulas and audits.

Formulas are pure arithmetic. Audits compare a solved MildSolution, integrated
against the tight family of measures, with the corresponding explicit bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .audit import AuditRecord, make_record, skipped_record
from .errors import ArgumentError
from .fields import Field, as_points
from .linear_evolution import Grid, MonteCarlo, g_apply, simulate_terminal
from .measures import radius_for_mass
from .operator_model import OperatorFamily
from .semilinear import MildSolution, Nonlinearity

SIGMA_FLOOR = 1.0 + 1e-6
HARNACK_MIN_P = 1.1


@dataclass(frozen=True)
class HyperParams:
    """Constants entering the regularization estimates."""

    p: float = 2.0
    gamma: float = 2.0
    kappa0: float = 1.0
    K: float = 0.5
    xi0: float = 0.0
    xi1: float = 0.0
    xi2: float = 0.0
    sigma1: Optional[float] = None

    def __post_init__(self):
        if self.p <= 1:
            raise ArgumentError("p must exceed 1")
        if self.kappa0 <= 0 or self.K <= 0:
            raise ArgumentError("kappa0 and K must be positive")

    @classmethod
    def from_nonlinearity(cls, nl: Nonlinearity, **kw) -> "HyperParams":
        return cls(xi0=nl.xi0, xi1=nl.xi1, xi2=nl.xi2, **kw)


def _pos(v: float) -> float:
    return max(v, 0.0)


# -- formulas -----------------------------------------------------------------

def hyper_exponent(params: HyperParams, t: float, s: float, gamma: Optional[float] = None) -> float:
    """p_gamma(t) = (p - 1)(exp(kappa0 (t - s)/K) - 1)/gamma + p."""
    g = params.gamma if gamma is None else gamma
    if math.isinf(g):
        return params.p
    return (params.p - 1.0) * math.expm1(params.kappa0 * (t - s) / params.K) / g + params.p


def omega_rate(params: HyperParams, sigma: float) -> float:
    """xi1 + (xi2^+)^2 sigma / ((sigma - 1)(p - 1) kappa0), with sigma floored at 1 + 1e-6."""
    if _pos(params.xi2) == 0.0:
        return params.xi1
    sg = max(sigma, SIGMA_FLOOR)
    return params.xi1 + _pos(params.xi2) ** 2 * sg / ((sg - 1.0) * (params.p - 1.0) * params.kappa0)


def omega_tilde(params: HyperParams, p: Optional[float] = None) -> float:
    """xi1 + 2 (xi2^+)^2 / (kappa0 (p - 1))."""
    pp = params.p if p is None else p
    return params.xi1 + 2 * _pos(params.xi2) ** 2 / (params.kappa0 * (pp - 1.0))


def omega_p(params: HyperParams, p: Optional[float] = None) -> float:
    """Stability rate xi1 + (xi2^+)^2 / (4 kappa0 (p - 1))."""
    pp = params.p if p is None else p
    return params.xi1 + _pos(params.xi2) ** 2 / (4 * params.kappa0 * (pp - 1.0))


def harnack_theta(sigma1: float, r: float) -> float:
    """(exp(2 sigma1 r) - 1)/(2 sigma1) when sigma1 > 0, r otherwise."""
    if sigma1 > 0:
        return math.expm1(2 * sigma1 * r) / (2 * sigma1)
    return r


def harnack_exponent(params: HyperParams, p: float, r: float, distance: float) -> float:
    """Exponent of the Harnack weight for points at the given distance after time r."""
    if p < HARNACK_MIN_P:
        raise ArgumentError(f"p must be at least {HARNACK_MIN_P} (the weight has a pole at p = 1)")
    if params.sigma1 is None:
        raise ArgumentError("sigma1 is undefined; the Harnack weight needs an x-independent diffusion")
    theta = harnack_theta(params.sigma1, r)
    return (p * (1 + _pos(params.xi1)) * r
            + p * theta * (distance + _pos(params.xi2) * r) ** 2 / (4 * params.kappa0 * r**2 * (p - 1)))


def exponent_shift_epsilon(params: HyperParams, tau: float, gamma: Optional[float] = None) -> float:
    """Time shift epsilon for which the exponent schedule with gamma' meets p_gamma at t."""
    g = params.gamma if gamma is None else gamma
    e = math.exp(params.kappa0 * tau / params.K)
    return params.K / (2 * params.kappa0) * math.log(g * e / (g + e - 1.0))


def exponent_shift_gamma_prime(params: HyperParams, tau: float, gamma: Optional[float] = None) -> float:
    """gamma' = gamma (exp(k(tau - eps)) - 1)/(exp(k tau) - 1) with k = kappa0/K."""
    g = params.gamma if gamma is None else gamma
    eps = exponent_shift_epsilon(params, tau, g)
    k = params.kappa0 / params.K
    return g * math.expm1(k * (tau - eps)) / math.expm1(k * tau)


def supercontractivity_constant(params: HyperParams, p: float, q: float, r: float,
                                nu: Callable[[float], float]) -> float:
    """c2(r) = exp(omega~_p r + (1/p - 1/q) nu(kappa0 r / (2 log(q-1) - 2 log(p-1))))."""
    if not q > p:
        raise ArgumentError("supercontractivity needs q > p")
    sigma = params.kappa0 * r / (2 * math.log(q - 1) - 2 * math.log(p - 1))
    return math.exp(omega_tilde(params, p) * r + (1.0 / p - 1.0 / q) * nu(sigma))


def weight_exponent(params: HyperParams, p: float, r: float) -> float:
    """Lambda(r) = Theta(r)/(2 kappa0 r^2 (p - 1)), the Gaussian weight exponent."""
    return harnack_theta(params.sigma1, r) / (2 * params.kappa0 * r**2 * (p - 1))


def tilde_c(params: HyperParams, p: float, r: float, radius: float) -> float:
    """C~(r) = exp((1 + xi1^+) r + Theta(r)(xi2^+ r + R)^2 / (2 kappa0 r^2 (p - 1)))."""
    theta = harnack_theta(params.sigma1, r)
    return math.exp((1 + _pos(params.xi1)) * r
                    + theta * (_pos(params.xi2) * r + radius) ** 2 / (2 * params.kappa0 * r**2 * (p - 1)))


def ultra_constants(params: HyperParams, p: float, r: float, radius: float, m_value: float) -> tuple[float, float]:
    """(c4(r), c5(r)) given R with mu_t(B_R) >= 2^{-p} and M_{r/2, p Lambda(r/2)}."""
    half = r / 2
    tail = math.exp((1 + _pos(params.xi1)) * half
                    + harnack_theta(params.sigma1, half) * _pos(params.xi2) ** 2 / (4 * params.kappa0 * (p - 1)))
    core = 2 * tilde_c(params, p, half, radius) * m_value ** (1.0 / p)
    return core * tail, (core + 1.0) * tail


# -- audits -------------------------------------------------------------------

def _norm(mu, values: np.ndarray, q: float) -> float:
    return float(mu.weights @ np.abs(values) ** q) ** (1.0 / q)


def _initial_norm(sol: MildSolution, fam, p: float) -> float:
    mu = fam.at(sol.s)
    return _norm(mu, sol.evaluate(sol.s, mu.nodes), p)


def check_hypercontractivity(sol: MildSolution, fam, params: HyperParams, t: float) -> AuditRecord:
    """||N(t,s)f||_{L^{p_gamma(t)}(mu_t)} <= e^{omega_{p,gamma}(t-s)} (||f||_{L^p(mu_s)} + xi0 (t-s))."""
    s = sol.s
    tau = t - s
    q = hyper_exponent(params, t, s)
    mu = fam.at(t)
    lhs = _norm(mu, sol.evaluate(t, mu.nodes), q)
    rhs = math.exp(omega_rate(params, params.gamma) * tau) * (_initial_norm(sol, fam, params.p) + params.xi0 * tau)
    return make_record("hypercontractivity", {"t": t, "s": s, "p": params.p, "gamma": params.gamma, "K": params.K,
                                              "kappa0": params.kappa0, "f": sol.f_name},
                       lhs, rhs, 1e-6 * (1 + rhs), {"exponent": q})


def _gradient_norm(sol: MildSolution, mu, t: float, q: float) -> float:
    return _norm(mu, np.linalg.norm(sol.evaluate_gradient(t, mu.nodes), axis=1), q)


def check_gradient_hyper(sol: MildSolution, fam, params: HyperParams, calibration: Sequence[float],
                         validation: Sequence[float]) -> AuditRecord:
    """Fit c0 in the profile c0 (1 + (t-s)^{-1/2}) on calibration times, then check disjoint validation times.

    The frozen constant is the calibration maximum plus a Lipschitz envelope
    built from the calibration grid alone.
    """
    s = sol.s
    if set(np.round(calibration, 12)) & set(np.round(validation, 12)):
        raise ArgumentError("calibration and validation times must be disjoint")
    base = _initial_norm(sol, fam, params.p)
    rate = omega_rate(params, math.sqrt(params.gamma))

    def parts(t):
        tau = t - s
        mu = fam.at(t)
        lhs = _gradient_norm(sol, mu, t, hyper_exponent(params, t, s))
        scale = math.exp(rate * tau) * (base + params.xi0 * tau) + params.xi0
        return lhs, scale * (1 + tau**-0.5)

    cal = np.sort(np.asarray(calibration, dtype=float))
    val = np.asarray(validation, dtype=float)
    if len(cal) < 2 or val.min() < cal[0] or val.max() > cal[-1]:
        raise ArgumentError("validation times must lie inside the span of at least two calibration times")
    ratios = []
    for t in cal:
        lhs, unit = parts(t)
        ratios.append(lhs / unit if unit > 0 else 0.0)
    ratios = np.array(ratios)
    # Lipschitz envelope: between calibration nodes the ratio may exceed its
    # nodal values by at most half a step times the steepest observed slope.
    steps = np.diff(cal)
    slope = float(np.max(np.abs(np.diff(ratios)) / steps))
    fitted = float(np.max(ratios)) + 0.5 * slope * float(np.max(steps))
    lhs, rhs = [], []
    for t in validation:
        a, unit = parts(t)
        lhs.append(a)
        rhs.append(fitted * unit)
    rhs = np.array(rhs)
    return make_record("gradient-hyper", {"s": s, "p": params.p, "gamma": params.gamma,
                                          "calibration": list(map(float, calibration)),
                                          "validation": list(map(float, validation))},
                       lhs, rhs, 1e-6 * (1 + rhs), {"fitted_c0": fitted, "calibration_max": float(np.max(ratios)),
                        "envelope_slope": slope, "profile": "c0 (1 + (t-s)^-1/2)"})


def check_supercontractivity(sol: MildSolution, fam, params: HyperParams, p: float, q: float, t: float,
                             nu: Callable[[float], float]) -> AuditRecord:
    """||N(t,s)f||_{L^q(mu_t)} <= c2(t-s) (||f||_{L^p(mu_s)} + xi0 (t-s))."""
    tau = t - sol.s
    c2 = supercontractivity_constant(params, p, q, tau, nu)
    mu = fam.at(t)
    lhs = _norm(mu, sol.evaluate(t, mu.nodes), q)
    rhs = c2 * (_initial_norm(sol, fam, p) + params.xi0 * tau)
    return make_record("supercontractivity", {"t": t, "s": sol.s, "p": p, "q": q, "f": sol.f_name},
                       lhs, rhs, 1e-6 * (1 + rhs), {"c2": c2})


def check_harnack(sol: MildSolution, op: OperatorFamily, backend, params: HyperParams, f: Field, p: float,
                  t: float, x_grid: Sequence[float], y_grid: Sequence[float]) -> AuditRecord:
    """|N(t,s)f(x)|^p <= exp(weight(x, y)) [G(t,s)|f|^p(y) + xi0^p] for all grid pairs."""
    check = "harnack"
    base = {"t": t, "s": sol.s, "p": p, "f": f.name}
    if not op.constant_diffusion or params.sigma1 is None:
        return skipped_record(check, base, "diffusion depends on x: sigma1 undefined")
    tau = t - sol.s
    xs = as_points(x_grid, op.dimension)
    ys = as_points(y_grid, op.dimension)
    u = np.abs(sol.evaluate(t, xs)) ** p
    gf = g_apply(op, backend, t, sol.s, f.power_abs(p), ys)
    lhs, rhs, slack = [], [], []
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            w = math.exp(harnack_exponent(params, p, tau, float(np.linalg.norm(x - y))))
            r = w * (gf.values[j] + params.xi0**p)
            lhs.append(u[i])
            rhs.append(r)
            slack.append(1e-6 * (1 + r) + 3 * w * gf.std_errors[j])
    return make_record(check, base, lhs, rhs, slack, {"pairs": len(lhs)})


def harnack_constants_reduction(params: HyperParams, p: float, tau: float) -> float:
    """|weight(x, x) - p (1 + xi1^+) tau| for xi2 = 0: zero in exact arithmetic."""
    if _pos(params.xi2) != 0.0:
        raise ArgumentError("the reduction needs xi2 <= 0")
    return abs(harnack_exponent(params, p, tau, 0.0) - p * (1 + _pos(params.xi1)) * tau)


@dataclass(frozen=True)
class MEstimate:
    """Empirical sup of G(t,s) exp(lambda |x|^2) with the clipping diagnostics."""

    value: float
    diverging: bool
    clip_fraction: float
    clipped_mass: float
    relative_se: float
    argmax: tuple

    def __float__(self) -> float:
        return self.value


def estimate_M_delta_lambda(op: OperatorFamily, backend, delta: float, lam: float, gaps: Sequence[float],
                            x_grid, s_grid: Sequence[float] = (0.0,)) -> MEstimate:
    """sup over s, gaps >= delta and x of G(s + gap, s) phi_lambda(x).

    Monte Carlo payoffs are clipped at exp(lambda (4 scale)^2) where scale is
    the RMS of the terminal states; the estimate is flagged as diverging when
    clipped paths carry more than 1% of it or its relative standard error
    exceeds 0.1. On a lattice the standard error is replaced by the relative
    change when the box is widened by 25%, which grows without bound when the
    weighted integral diverges.
    """
    if lam < 0:
        raise ArgumentError("lambda must be non-negative")
    pts = as_points(x_grid, op.dimension)
    use = [g for g in gaps if g >= delta - 1e-12]
    if not use:
        raise ArgumentError("no gap at least delta")
    if lam == 0.0:
        return MEstimate(1.0, False, 0.0, 0.0, 0.0, (use[0], tuple(pts[0])))
    best = (-np.inf, None)
    clip_frac = clipped = rel_se = 0.0
    for s in s_grid:
        for gap in use:
            if isinstance(backend, Grid):
                weight = lambda x: np.exp(lam * np.sum(x * x, axis=1))
                vals = g_apply(op, backend, s + gap, s, weight, pts).values
                wider = replace(backend, radius=1.25 * backend.radius, n_cells=int(round(1.25 * backend.n_cells)))
                check = g_apply(op, wider, s + gap, s, weight, pts).values
                rel_se = max(rel_se, float(np.max(np.abs(check - vals) / np.abs(check))))
                for i, v in enumerate(vals):
                    if v > best[0]:
                        best = (float(v), (gap, tuple(pts[i])))
                continue
            term = simulate_terminal(op, backend, s + gap, s, pts)
            for i in range(len(pts)):
                sq = np.sum(term[i] ** 2, axis=1)
                scale = math.sqrt(float(np.mean(sq)))
                cap = lam * (4 * max(scale, 1e-3)) ** 2
                expo = lam * sq
                hit = expo > cap
                pay = np.exp(np.minimum(expo, cap))
                est = float(np.mean(pay))
                se = float(np.std(pay, ddof=1) / math.sqrt(len(pay)))
                frac = float(np.mean(hit))
                mass = float(np.sum(pay[hit])) / len(pay) / est
                if est > best[0]:
                    best = (est, (gap, tuple(pts[i])))
                clip_frac = max(clip_frac, frac)
                clipped = max(clipped, mass)
                rel_se = max(rel_se, se / est)
    diverging = clipped > 0.01 or rel_se > 0.1
    return MEstimate(best[0], diverging, clip_frac, clipped, rel_se, best[1])


def analytic_ou_m(lam: float, tau: float, x: float) -> float:
    """G(t,s) exp(lambda x^2) for the OU kernel N(x e^{-tau}, 1 - e^{-2 tau}); inf when lambda v >= 1/2."""
    v = -math.expm1(-2 * tau)
    if lam * v >= 0.5:
        return math.inf
    return math.exp(lam * x**2 * math.exp(-2 * tau) / (1 - 2 * lam * v)) / math.sqrt(1 - 2 * lam * v)


def check_ultraboundedness(sol: MildSolution, op: OperatorFamily, fam, params: HyperParams, p: float, t: float,
                           m_backend, x_grid, radius_grid: Sequence[float] = tuple(np.arange(0.25, 8.01, 0.25)),
                           n_gaps: int = 4) -> AuditRecord:
    """||N(t,s)f||_inf <= c4(t-s) ||f||_{L^p(mu_s)} + c5(t-s) xi0 with c4, c5 from the explicit construction."""
    s = sol.s
    r = t - s
    base = {"t": t, "s": s, "p": p, "f": sol.f_name}
    if params.sigma1 is None or not op.constant_diffusion:
        return skipped_record("ultraboundedness", base, "diffusion depends on x: sigma1 undefined")
    t_grid = list(np.linspace(s, t, 5))
    radius = radius_for_mass(fam, t_grid, radius_grid, 2.0 ** (-p))
    if radius is None:
        return skipped_record("ultraboundedness", base, "no radius with mu_t(B_R) >= 2^-p on the grid")
    lam = p * weight_exponent(params, p, r / 2)
    gaps = list(r / 2 * (1 + np.arange(n_gaps)))
    m = estimate_M_delta_lambda(op, m_backend, r / 2, lam, gaps, x_grid)
    info = {"R": radius, "lambda": lam, "M": m.value, "M_diverging": m.diverging, "clipped_mass": m.clipped_mass,
            "relative_se": m.relative_se}
    if m.diverging or not np.isfinite(m.value):
        return skipped_record("ultraboundedness", base,
                              f"M_(delta,lambda) diverges for lambda={lam:.4g}: weighted bound unavailable", info)
    c4, c5 = ultra_constants(params, p, r, radius, m.value)
    lhs = float(np.max(np.abs(sol.at(t))))
    rhs = c4 * _initial_norm(sol, fam, p) + c5 * params.xi0
    info.update({"c4": c4, "c5": c5})
    return make_record("ultraboundedness", base, lhs, rhs, 1e-6 * (1 + rhs), info)


def fit_sup_gradient_constant(calibration: Sequence[MildSolution], tau: float, xi0: float = 0.0) -> float:
    """Smallest C with sqrt(tau) ||grad N f||_inf <= C (||f||_inf + (tau + 1) xi0) over calibration solves."""
    best = 0.0
    for sol in calibration:
        t = sol.s + tau
        lhs = math.sqrt(tau) * float(np.max(np.linalg.norm(sol.gradient_at(t), axis=-1)))
        denom = float(np.max(np.abs(sol.values[0]))) + (tau + 1) * xi0
        if denom > 0:
            best = max(best, lhs / denom)
    return best


def check_ultraboundedness_gradient(sol: MildSolution, op: OperatorFamily, fam, params: HyperParams, p: float,
                                    t: float, m_backend, x_grid, sup_constant: float,
                                    radius_grid: Sequence[float] = tuple(np.arange(0.25, 8.01, 0.25))) -> AuditRecord:
    """||grad N(t,s)f||_inf <= c6 ||f||_{L^p(mu_s)} + c7 xi0 with the fitted sup-norm constant C_{(t-s)/2}."""
    s = sol.s
    r = t - s
    base = {"t": t, "s": s, "p": p, "f": sol.f_name, "C_half": sup_constant}
    if params.sigma1 is None or not op.constant_diffusion:
        return skipped_record("ultraboundedness-gradient", base, "diffusion depends on x: sigma1 undefined")
    radius = radius_for_mass(fam, list(np.linspace(s, t, 5)), radius_grid, 2.0 ** (-p))
    if radius is None:
        return skipped_record("ultraboundedness-gradient", base, "no radius with mu_t(B_R) >= 2^-p on the grid")
    lam = p * weight_exponent(params, p, r / 4)
    m = estimate_M_delta_lambda(op, m_backend, r / 4, lam, [r / 4, r / 2, 3 * r / 4], x_grid)
    if m.diverging or not np.isfinite(m.value):
        return skipped_record("ultraboundedness-gradient", base,
                              f"M_(delta,lambda) diverges for lambda={lam:.4g}", {"M": m.value})
    c4h, c5h = ultra_constants(params, p, r / 2, radius, m.value)
    c6 = math.sqrt(2.0 / r) * sup_constant * c4h
    c7 = sup_constant * (c5h * math.sqrt(2.0 / r) + math.sqrt(r / 2) + math.sqrt(2.0 / r))
    lhs = float(np.max(np.linalg.norm(sol.gradient_at(t), axis=-1)))
    rhs = c6 * _initial_norm(sol, fam, p) + c7 * params.xi0
    return make_record("ultraboundedness-gradient", base, lhs, rhs, 1e-6 * (1 + rhs),
                       {"R": radius, "M": m.value, "c6": c6, "c7": c7})


def _slope(times: np.ndarray, values: np.ndarray) -> float:
    return float(np.polyfit(times, np.log(values), 1)[0])


def check_stability(sol: MildSolution, fam, params: HyperParams, nl: Nonlinearity, p: float, j: int,
                    t_grid: Sequence[float], rate_tolerance: float = 0.1) -> AuditRecord:
    """Fitted decay slope of log ||D^j N(t,s)f||_{L^p(mu_t)} <= omega_p + 0.1|omega_p|, plus the absolute bound.

    For j = 0 the constant is 1; for j = 1 it is fitted at the first grid time
    and frozen.
    """
    if j not in (0, 1):
        raise ArgumentError("j must be 0 or 1")
    s = sol.s
    w = omega_p(params, p)
    base = {"p": p, "j": j, "omega_p": w, "s": s, "t_grid": list(map(float, t_grid))}
    if not nl.source_free:
        return skipped_record("stability", base, "psi(t, x, 0, 0) is not identically zero")
    if w >= 0:
        return skipped_record("stability", base, f"omega_p = {w:g} is not negative")
    times = np.array([t for t in t_grid if t > s + j])
    norms = []
    for t in times:
        mu = fam.at(t)
        vals = sol.evaluate(t, mu.nodes) if j == 0 else np.linalg.norm(sol.evaluate_gradient(t, mu.nodes), axis=1)
        norms.append(_norm(mu, vals, p))
    norms = np.array(norms)
    f_norm = _initial_norm(sol, fam, p)
    if f_norm == 0.0 or np.all(norms <= 1e-300):
        return skipped_record("stability", base, "null datum: the solution vanishes identically")
    slope = _slope(times, norms)
    k_p = 1.0 if j == 0 else norms[0] / (math.exp(w * (times[0] - s)) * f_norm)
    bound = k_p * np.exp(w * (times - s)) * f_norm
    lhs = np.concatenate([[slope], norms])
    rhs = np.concatenate([[w + rate_tolerance * abs(w)], bound])
    return make_record("stability", base, lhs, rhs, np.concatenate([[0.0], 1e-6 * (1 + bound)]),
                       {"slope": slope, "K_p": k_p, "norms": norms.tolist()})


def check_stability_sup(sol: MildSolution, params: HyperParams, nl: Nonlinearity, j: int, t_grid: Sequence[float],
                        box: Optional[float] = None, rate_tolerance: float = 0.1) -> AuditRecord:
    """Sup-norm variant on the lattice box: slope <= xi1 + 0.1|xi1| and bound with K fitted at the first time."""
    s = sol.s
    base = {"j": j, "xi1": params.xi1, "s": s, "t_grid": list(map(float, t_grid))}
    if not nl.source_free:
        return skipped_record("stability-sup", base, "psi(t, x, 0, 0) is not identically zero")
    if params.xi1 >= 0:
        return skipped_record("stability-sup", base, f"xi1 = {params.xi1:g} is not negative")
    lat = sol.lattice
    mask = lat.box_mask(lat.radius / 2 if box is None else box)
    times = np.array([t for t in t_grid if t > s + j])
    norms = []
    for t in times:
        arr = sol.at(t) if j == 0 else np.linalg.norm(sol.gradient_at(t), axis=-1)
        norms.append(float(np.max(np.abs(arr[mask]))))
    norms = np.array(norms)
    if np.all(norms <= 1e-300):
        return skipped_record("stability-sup", base, "null datum: the solution vanishes identically")
    slope = _slope(times, norms)
    w = params.xi1
    f_sup = float(np.max(np.abs(sol.values[0][mask])))
    k = 1.0 if j == 0 else norms[0] / (math.exp(w * (times[0] - s)) * f_sup)
    bound = k * np.exp(w * (times - s)) * f_sup
    lhs = np.concatenate([[slope], norms])
    rhs = np.concatenate([[w + rate_tolerance * abs(w)], bound])
    return make_record("stability-sup", base, lhs, rhs, np.concatenate([[0.0], 1e-6 * (1 + bound)]),
                       {"slope": slope, "K": k, "norms": norms.tolist()})


# -- formula unit checks ------------------------------------------------------

def check_formulas(kappas=(0.5, 1.0, 2.0), Ks=(0.5, 1.0), gammas=(1.5, 2.0, 4.0, 10.0),
                   taus=(0.01, 0.1, 0.5, 1.0, 2.0, 5.0)) -> AuditRecord:
    """Exact and 1e-12 identities for the exponent schedule, the rates and the Harnack weight."""
    errors = []
    names = []

    def add(name, err):
        names.append(name)
        errors.append(err)

    hp = HyperParams(p=2.0, gamma=2.0, kappa0=1.0, K=1.0)
    add("p_gamma(s)=p", abs(hyper_exponent(hp, 0.0, 0.0) - 2.0))
    add("p_gamma substitution", abs(hyper_exponent(hp, math.log(2.0), 0.0) - 2.5))
    add("p_gamma gamma->inf", abs(hyper_exponent(hp, 1.0, 0.0, gamma=math.inf) - 2.0))
    add("omega xi2<=0", abs(omega_rate(replace(hp, xi1=0.3, xi2=-1.0), 2.0) - 0.3))
    add("omega substitution", abs(omega_rate(replace(hp, xi1=-1.0, xi2=1.0), 2.0) - 1.0))
    add("theta sigma1<0", abs(harnack_theta(-1.0, 0.7) - 0.7))
    add("theta sigma1->0+", abs(harnack_theta(1e-13, 0.7) - 0.7))
    add("theta substitution", abs(harnack_theta(1.0, math.log(2.0)) - 1.5))
    for k0 in kappas:
        for K in Ks:
            for g in gammas:
                par = HyperParams(p=2.0, gamma=g, kappa0=k0, K=K)
                for tau in taus:
                    eps = exponent_shift_epsilon(par, tau)
                    gp = exponent_shift_gamma_prime(par, tau)
                    lhs = hyper_exponent(par, tau - eps, 0.0, gamma=gp)
                    rhs = hyper_exponent(par, tau, 0.0)
                    add("exponent shift identity", abs(lhs - rhs) / rhs)
                    add("gamma' >= sqrt(gamma)", max(0.0, math.sqrt(g) - gp) / math.sqrt(g))
    for p in (1.5, 2.0, 3.0):
        for xi1 in (-1.0, 0.5):
            par = replace(hp, xi1=xi1, xi2=0.0, sigma1=-1.0)
            add("harnack x=y reduction", harnack_constants_reduction(par, p, 0.8))
    errors = np.maximum(np.array(errors), 0.0)
    k = int(np.argmax(errors))
    return make_record("formulas", {"n_identities": len(errors)}, errors, np.zeros(len(errors)), 1e-12,
                       {"worst_identity": names[k]})


def check_monotone_omega(params: HyperParams, sigmas: Sequence[float] = tuple(np.linspace(1.01, 20, 200))) -> bool:
    vals = [omega_rate(params, s) for s in sigmas]
    return all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
