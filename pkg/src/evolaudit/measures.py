"""Tight evolution systems of measures, quadrature against them, and their audits.

The family satisfies  integral G(t,s)f dmu_t = integral f dmu_s  for s < t, so
the measures are transported backwards in time: in the Gaussian case
d m/dt = -(B m + c) and d Sigma/dt = -(B Sigma + Sigma B^T + 2Q), and the
tight family is the solution that stays bounded, obtained by integrating from
far in the future down to the requested time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.stats import norm as normal_dist

from .audit import AuditRecord, make_record
from .errors import ArgumentError
from .fields import Field, as_points
from .linear_evolution import FieldSample, Grid, MonteCarlo, g_apply, simulate_terminal
from .operator_model import OperatorFamily, apply_operator


class MixingWarning(UserWarning):
    """Empirical pullback horizon shorter than five relaxation times."""


def _gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / w.sum()


@dataclass(frozen=True)
class GaussianMeasure:
    """N(mean, cov) with a tensor Gauss-Hermite rule whitened by cov^{1/2}."""

    mean: np.ndarray
    cov: np.ndarray
    nodes_per_axis: int = 64
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = len(mean)
        evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
        if np.any(evals <= 0):
            raise ArgumentError("covariance is not positive definite")
        root = (evecs * np.sqrt(evals)) @ evecs.T
        z, w = _gauss_hermite(self.nodes_per_axis)
        grids = np.meshgrid(*([z] * d), indexing="ij")
        zs = np.stack([g.ravel() for g in grids], axis=1)
        ws = np.ones(len(zs))
        for g in np.meshgrid(*([w] * d), indexing="ij"):
            ws = ws * g.ravel()
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "nodes", mean + zs @ root.T)
        object.__setattr__(self, "weights", ws / ws.sum())

    @property
    def dimension(self) -> int:
        return len(self.mean)

    def integrate(self, f) -> float:
        return float(self.weights @ np.asarray(f(self.nodes), dtype=float))

    def coarser(self, nodes_per_axis: int = 48) -> "GaussianMeasure":
        return GaussianMeasure(self.mean, self.cov, nodes_per_axis)

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        return np.random.default_rng(seed).multivariate_normal(self.mean, self.cov, size=n)

    def logpdf(self, x) -> np.ndarray:
        pts = as_points(x, self.dimension)
        d = self.dimension
        diff = pts - self.mean
        sol = np.linalg.solve(self.cov, diff.T).T
        _, logdet = np.linalg.slogdet(self.cov)
        return -0.5 * (np.sum(diff * sol, axis=1) + logdet + d * math.log(2 * math.pi))

    def mass_outside(self, radius: float) -> float:
        if self.dimension == 1:
            sd = math.sqrt(self.cov[0, 0])
            m = self.mean[0]
            return float(normal_dist.sf((radius - m) / sd) + normal_dist.cdf((-radius - m) / sd))
        pts = self.sample(200_000, seed=7)
        return float(np.mean(np.linalg.norm(pts, axis=1) > radius))


@dataclass(frozen=True)
class ParticleMeasure:
    """Equally weighted particle cloud."""

    points: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.points

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self.points), 1.0 / len(self.points))

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def integrate(self, f) -> float:
        return float(np.mean(np.asarray(f(self.points), dtype=float)))

    def coarser(self, nodes_per_axis: int = 48) -> "ParticleMeasure":
        return self

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        idx = np.random.default_rng(seed).integers(0, len(self.points), size=n)
        return self.points[idx]

    def logpdf(self, x):
        raise ArgumentError("particle measures have no density")

    def mass_outside(self, radius: float) -> float:
        return float(np.mean(np.linalg.norm(self.points, axis=1) > radius))


Measure = Union[GaussianMeasure, ParticleMeasure]


class GaussianFlow:
    """Gaussian tight family for b(t,x) = B(t)x + c(t) and x-independent Q(t).

    Moments are integrated by classical RK4 from ``t_hi + horizon`` down to
    ``t_lo``; values in between come from cubic Hermite interpolation using the
    exact right-hand side (dense output).
    """

    kind = "gaussian"

    def __init__(self, op: OperatorFamily, t_lo: float = 0.0, t_hi: float = 10.0, horizon: float = 40.0,
                 step: float = 0.01, nodes_per_axis: int = 64):
        if op.linear_drift is None or not op.constant_diffusion:
            raise ArgumentError("GaussianFlow needs a linear drift and an x-independent diffusion")
        self.op = op
        self.horizon = float(horizon)
        self.step = float(step)
        self.nodes_per_axis = nodes_per_axis
        self.t_lo, self.t_hi = float(t_lo), float(t_hi)
        self._times, self._mean, self._cov, self._dmean, self._dcov = self._integrate(self.t_lo, self.t_hi)
        eig = np.linalg.eigvalsh(self._cov)
        if np.any(eig[:, 0] <= 0):
            raise ArgumentError("covariance lost positive definiteness along the window")

    def _rhs(self, t: float, m: np.ndarray, cov: np.ndarray):
        bmat, c = self.op.linear_drift(t)
        bmat = np.atleast_2d(np.asarray(bmat, dtype=float))
        c = np.atleast_1d(np.asarray(c, dtype=float))
        q = self.op.Q(t, np.zeros((1, self.op.dimension)))[0]
        return -(bmat @ m + c), -(bmat @ cov + cov @ bmat.T + 2 * q)

    def _integrate(self, t_lo: float, t_hi: float):
        d = self.op.dimension
        start = t_hi + self.horizon
        n = int(math.ceil((start - t_lo) / self.step))
        h = (start - t_lo) / n
        times = start - h * np.arange(n + 1)
        m = np.zeros(d)
        cov = np.eye(d)
        means, covs, dms, dcs = [m], [cov], [], []
        for k in range(n):
            t = times[k]
            k1 = self._rhs(t, m, cov)
            k2 = self._rhs(t - h / 2, m - h / 2 * k1[0], cov - h / 2 * k1[1])
            k3 = self._rhs(t - h / 2, m - h / 2 * k2[0], cov - h / 2 * k2[1])
            k4 = self._rhs(t - h, m - h * k3[0], cov - h * k3[1])
            dms.append(k1[0])
            dcs.append(k1[1])
            m = m - h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            cov = cov - h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            cov = 0.5 * (cov + cov.T)
            means.append(m)
            covs.append(cov)
        last = self._rhs(times[-1], m, cov)
        dms.append(last[0])
        dcs.append(last[1])
        keep = times <= t_hi + 2 * h
        order = np.argsort(times[keep])
        sel = lambda arr: np.asarray(arr)[keep][order]
        return sel(times), sel(means), sel(covs), sel(dms), sel(dcs)

    def moments(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(m(t), Sigma(t)) from dense output, or a fresh integration outside the window."""
        times = self._times
        if t < times[0] or t > times[-1]:
            tt, mm, cc, _, _ = self._integrate(t, t)
            j = int(np.argmin(np.abs(tt - t)))
            return mm[j], cc[j]
        j = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
        h = times[j + 1] - times[j]
        u = (t - times[j]) / h
        h00, h10 = 2 * u**3 - 3 * u**2 + 1, u**3 - 2 * u**2 + u
        h01, h11 = -2 * u**3 + 3 * u**2, u**3 - u**2
        m = h00 * self._mean[j] + h10 * h * self._dmean[j] + h01 * self._mean[j + 1] + h11 * h * self._dmean[j + 1]
        c = h00 * self._cov[j] + h10 * h * self._dcov[j] + h01 * self._cov[j + 1] + h11 * h * self._dcov[j + 1]
        return m, 0.5 * (c + c.T)

    def at(self, t: float) -> GaussianMeasure:
        self.op.check_time(t)
        m, c = self.moments(t)
        return GaussianMeasure(m, c, self.nodes_per_axis)


class EmpiricalFamily:
    """Pullback particle clouds: paths launched from 0 at time t + horizon and run down to t."""

    kind = "empirical"

    def __init__(self, op: OperatorFamily, mc: MonteCarlo, horizon: float = 10.0, n_particles: int = 4000,
                 relaxation_rate: Optional[float] = None):
        if n_particles < 1000:
            raise ArgumentError("empirical families need at least 1000 particles")
        self.op = op
        self.mc = MonteCarlo(n_paths=n_particles, dt=mc.dt, seed=mc.seed, block=mc.block, workers=mc.workers)
        self.horizon = float(horizon)
        self.n_particles = n_particles
        self.relaxation_rate = relaxation_rate
        self._cache: dict = {}

    def mixing_ok(self) -> bool:
        rate = self.relaxation_rate
        return rate is not None and rate < 0 and self.horizon >= 5.0 / abs(rate)

    def at(self, t: float) -> ParticleMeasure:
        self.op.check_time(t)
        if not self.mixing_ok():
            warnings.warn(f"pullback horizon {self.horizon} is shorter than five relaxation times "
                          f"(rate {self.relaxation_rate})", MixingWarning, stacklevel=2)
        key = float(t)
        if key not in self._cache:
            origin = np.zeros((1, self.op.dimension))
            cloud = simulate_terminal(self.op, self.mc, t + self.horizon, t, origin, stream_ids=[2**31 - 1])[0]
            self._cache[key] = ParticleMeasure(cloud)
        return self._cache[key]


MeasureFamily = Union[GaussianFlow, EmpiricalFamily]


def measure_at(fam: MeasureFamily, t: float) -> Measure:
    """The measure mu_t of the family."""
    return fam.at(t)


def _fvals(f, x):
    return np.asarray(f(x), dtype=float).reshape(len(x))


def lp_norm(fam: MeasureFamily, t: float, f, p: float) -> float:
    """(integral |f|^p dmu_t)^{1/p} by the family's quadrature."""
    if not 1 <= p < np.inf:
        raise ArgumentError("p must lie in [1, inf)")
    mu = fam.at(t)
    return float(mu.weights @ np.abs(_fvals(f, mu.nodes)) ** p) ** (1.0 / p)


def lp_norm_nodes(mu: Measure, values: np.ndarray, p: float) -> float:
    """L^p norm of values already evaluated at the measure's nodes."""
    return float(mu.weights @ np.abs(values) ** p) ** (1.0 / p)


def sampling_error(mu: Measure, values: np.ndarray) -> float:
    """Three standard errors of a particle average; zero for deterministic quadrature."""
    if isinstance(mu, ParticleMeasure):
        return 3.0 * float(np.std(values)) / math.sqrt(len(values))
    return 0.0


def check_invariance(op: OperatorFamily, backend, fam: MeasureFamily, t: float, s: float, f: Field,
                     tol: Optional[float] = None) -> AuditRecord:
    """|integral G(t,s)f dmu_t - integral f dmu_s| within quadrature plus backend tolerance."""
    mu_t, mu_s = fam.at(t), fam.at(s)
    sample = g_apply(op, backend, t, s, f, mu_t.nodes)
    lhs_int = float(mu_t.weights @ sample.values)
    rhs_int = mu_s.integrate(lambda x: _fvals(f, x))
    quad_err = abs(rhs_int - mu_s.coarser().integrate(lambda x: _fvals(f, x)))
    if isinstance(mu_t, ParticleMeasure):
        f_s = _fvals(f, mu_s.nodes)
        if mu_t.nodes.shape == mu_s.nodes.shape and np.array_equal(mu_t.nodes, mu_s.nodes):
            # one cloud serves both times: only the fluctuation of G f - f matters
            quad_err += sampling_error(mu_t, sample.values - f_s)
        else:
            quad_err += math.hypot(sampling_error(mu_t, sample.values), sampling_error(mu_s, f_s))
    if tol is None:
        tol = 1e-3 if isinstance(backend, Grid) else 3.0 * float(mu_t.weights @ sample.std_errors)
    slack = tol + quad_err
    params = {"operator": op.name, "f": f.name, "s": s, "t": t, "backend": backend.kind}
    details = {"integral_G_f_mu_t": lhs_int, "integral_f_mu_s": rhs_int, "backend_tolerance": tol,
               "quadrature_error": quad_err}
    return make_record("invariance", params, abs(lhs_int - rhs_int), 0.0, slack, details)


@dataclass(frozen=True)
class SeparableField:
    """f(r, x) = a(r) g(x)."""

    time_factor: Callable[[float], float]
    time_derivative: Callable[[float], float]
    space: Field
    name: str = "separable"


def check_measure_derivative(op: OperatorFamily, fam: MeasureFamily, fld: SeparableField, r_grid: Sequence[float],
                             h: float = 1e-3) -> AuditRecord:
    """d/dr integral f(r,.) dmu_r = integral (D_r f - A(r) f) dmu_r on r_grid."""
    g = fld.space
    lhs, rhs, tols = [], [], []
    for r in r_grid:
        def total(rr):
            mu = fam.at(rr)
            return fld.time_factor(rr) * mu.integrate(lambda x: _fvals(g, x))

        lhs.append((total(r + h) - total(r - h)) / (2 * h))
        mu = fam.at(r)

        def integrand(x, r=r):
            return fld.time_derivative(r) * _fvals(g, x) - fld.time_factor(r) * apply_operator(op, r, g, x)

        value = mu.integrate(integrand)
        rhs.append(value)
        noise = sampling_error(mu, integrand(mu.nodes)) if isinstance(mu, ParticleMeasure) else 0.0
        tols.append(max(1e-4, 5 * abs(value - mu.coarser().integrate(integrand))) + noise)
    lhs, rhs, tols = np.array(lhs), np.array(rhs), np.array(tols)
    err = np.abs(lhs - rhs)
    scale = float(np.max(np.abs(rhs))) if len(rhs) else 0.0
    rel = float(np.max(err)) / scale if scale > 0 else float(np.max(err, initial=0.0))
    params = {"operator": op.name, "f": fld.name, "r_grid": list(map(float, r_grid)), "h": h}
    return make_record("measure-derivative", params, err, np.zeros(len(err)), tols,
                       {"relative_error": rel, "lhs": lhs.tolist(), "rhs": rhs.tolist()})


def _entropy_terms(mu: Measure, f: Field, q: float):
    x = mu.nodes
    fv = _fvals(f, x)
    absf = np.abs(fv)
    keep = absf >= 1e-12
    w = mu.weights
    safe = np.where(keep, absf, 1.0)
    lhs = float(np.sum(w * np.where(keep, safe**q * np.log(safe), 0.0)))
    norm_q = float(np.sum(w * absf**q)) ** (1.0 / q)
    first = norm_q**q * math.log(norm_q) if norm_q > 0 else 0.0
    grad2 = np.sum(f.grad(x) ** 2, axis=1)
    dirichlet = float(np.sum(w * np.where(keep, safe ** (q - 2) * grad2, 0.0)))
    return lhs, first, dirichlet, norm_q


def check_logsobolev(fam: MeasureFamily, t: float, f: Field, q: float, K: float) -> AuditRecord:
    """integral |f|^q log|f| <= ||f||_q^q log||f||_q + K q integral |f|^{q-2} |grad f|^2."""
    if not q > 1:
        raise ArgumentError("q must exceed 1")
    lhs, first, dirichlet, _ = _entropy_terms(fam.at(t), f, q)
    rhs = first + K * q * dirichlet
    tol = 1e-10 * (1 + abs(lhs) + abs(first))
    return make_record("logsobolev", {"t": t, "f": f.name, "q": q, "K": K}, lhs, rhs, tol,
                       {"entropy": lhs - first, "dirichlet": dirichlet})


def logsobolev_ratio(mu: Measure, f: Field, q: float) -> float:
    lhs, first, dirichlet, _ = _entropy_terms(mu, f, q)
    entropy = lhs - first
    if abs(entropy) <= 1e-12 * (1 + abs(lhs) + abs(first)):
        entropy = 0.0
    return max(entropy, 0.0) / max(q * dirichlet, 1e-14)


def estimate_logsobolev_constant(fam: MeasureFamily, t: float, test_family: Sequence[Field], q: float) -> float:
    """Largest entropy / (q Dirichlet) ratio over the family: a lower witness for K."""
    if len(test_family) == 0:
        raise ArgumentError("empty test family")
    mu = fam.at(t)
    return max(logsobolev_ratio(mu, f, q) for f in test_family)


def dilated_exponentials(dimension: int = 1, slopes: Sequence[float] = (0.25, 0.5, 0.75, 1.0, 1.5)) -> list:
    """exp(a x_0) for several slopes; extremal for Gaussian log-Sobolev inequalities."""
    from .fields import exp_linear
    out = []
    for a in slopes:
        direction = np.zeros(dimension)
        direction[0] = a
        out.append(exp_linear(direction, dimension))
    return out


@dataclass(frozen=True)
class NuFunction:
    """Decreasing nu(sigma): 'rational' c1 + c2/sigma, or a 'table' of (sigma, nu) knots."""

    kind: str = "rational"
    c1: float = 1.0
    c2: float = 1.0
    table: tuple = ()

    def __call__(self, sigma: float) -> float:
        if self.kind == "rational":
            return self.c1 + self.c2 / sigma
        if self.kind == "table":
            knots = sorted(self.table)
            below = [v for s, v in knots if s <= sigma]
            if not below:
                return float("inf")
            return float(below[-1])
        raise ArgumentError(f"unknown nu kind {self.kind!r}")


def check_lsi_epsilon(fam: MeasureFamily, t: float, f: Field, p: float, sigmas: Sequence[float],
                      nu: Callable[[float], float]) -> AuditRecord:
    """entropy <= nu(sigma)/p ||f||_p^p + sigma p Dirichlet for every sigma in the grid."""
    lhs, first, dirichlet, norm_p = _entropy_terms(fam.at(t), f, p)
    entropy = lhs - first
    rhs = np.array([nu(sg) / p * norm_p**p + sg * p * dirichlet for sg in sigmas])
    tol = 1e-10 * (1 + abs(lhs) + abs(first))
    return make_record("lsi-epsilon", {"t": t, "f": f.name, "p": p, "sigmas": list(sigmas)},
                       np.full(len(rhs), entropy), rhs, tol, {"dirichlet": dirichlet})


def radius_for_mass(fam: MeasureFamily, t_grid: Sequence[float], radius_grid: Sequence[float],
                    mass: float) -> Optional[float]:
    """Smallest radius with mu_t(B_R) >= mass for every t in the grid."""
    for r in sorted(radius_grid):
        if all(1.0 - fam.at(t).mass_outside(r) >= mass for t in t_grid):
            return float(r)
    return None


def check_tightness(fam: MeasureFamily, t_grid: Sequence[float], radius_grid: Sequence[float],
                    eps: Sequence[float] = (0.1, 0.01)) -> AuditRecord:
    """For each eps find r with sup_t mu_t(R^d minus B_r) < eps."""
    radii = sorted(radius_grid)
    outside = np.array([[fam.at(t).mass_outside(r) for r in radii] for t in t_grid])
    worst = outside.max(axis=0)
    found = {}
    lhs, rhs = [], []
    for e in eps:
        ok = np.flatnonzero(worst < e)
        r = radii[int(ok[0])] if len(ok) else None
        found[str(e)] = r
        lhs.append(worst[int(ok[0])] if len(ok) else worst[-1])
        rhs.append(e)
    rec = make_record("tightness", {"t_grid": list(map(float, t_grid)), "radius_grid": radii, "eps": list(eps)},
                      lhs, rhs, 0.0, {"radius_for_eps": found})
    # strict inequality is required
    rec.passed = all(v is not None for v in found.values())
    return rec
