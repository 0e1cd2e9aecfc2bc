"""Second-order operator families A(t) = sum q_ij D_ij + sum b_i D_i and their certificates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArgumentError, DomainError, EvaluationError
from .fields import Field, as_points

log = logging.getLogger(__name__)

JACOBIAN_STEP = 1e-5


def jacobi_eigenvalues(matrices: np.ndarray, tol: float = 1e-14, max_sweeps: int = 50) -> np.ndarray:
    """Eigenvalues of a stack of symmetric matrices by cyclic Jacobi rotations.

    Returns ascending eigenvalues with shape (n, d). Intended for d <= 3.
    """
    a = np.array(matrices, dtype=float, copy=True)
    if a.ndim == 2:
        a = a[None]
    n, d, _ = a.shape
    if d == 1:
        return a[:, :, 0].copy()
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2, axis=(1, 2)))
        scale = np.sqrt(np.sum(a**2, axis=(1, 2)))
        if np.all(off <= tol * np.maximum(scale, 1e-300)):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[:, p, q]
                active = np.abs(apq) > 1e-300
                if not np.any(active):
                    continue
                app, aqq = a[:, p, p], a[:, q, q]
                theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta**2 + 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t**2 + 1.0)
                s = t * c
                rot = np.broadcast_to(np.eye(d), (n, d, d)).copy()
                rot[:, p, p] = c
                rot[:, q, q] = c
                rot[:, p, q] = s
                rot[:, q, p] = -s
                a = np.einsum("nji,njk,nkl->nil", rot, a, rot)
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
    return np.sort(np.diagonal(a, axis1=1, axis2=2), axis=1)


@dataclass(frozen=True)
class OperatorFamily:
    """Coefficients of A(t) on R^d.

    ``diffusion(t, X)`` maps points of shape (n, d) to matrices (n, d, d) and
    ``drift(t, X)`` to vectors (n, d). Jacobians, when supplied, follow the
    layouts (n, d, d, d) with ``[.., i, j, k] = D_k q_ij`` and (n, d, d) with
    ``[.., i, k] = D_k b_i``; otherwise central differences are used.

    ``linear_drift(t) -> (B, c)`` declares b(t, x) = B x + c, which together
    with ``constant_diffusion`` enables the Gaussian measure flow.
    """

    dimension: int
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    drift: Callable[[float, np.ndarray], np.ndarray]
    name: str = "custom"
    t_min: Optional[float] = None
    diffusion_jacobian: Optional[Callable] = None
    drift_jacobian: Optional[Callable] = None
    constant_diffusion: bool = False
    autonomous: bool = False
    linear_drift: Optional[Callable[[float], tuple]] = None

    def check_time(self, t: float) -> None:
        if not np.isfinite(t) or (self.t_min is not None and t <= self.t_min):
            raise DomainError(f"time {t} outside the interval ({self.t_min}, inf) of operator {self.name!r}")

    def Q(self, t: float, x) -> np.ndarray:
        pts = as_points(x, self.dimension)
        q = np.asarray(self.diffusion(t, pts), dtype=float).reshape(len(pts), self.dimension, self.dimension)
        if not np.all(np.isfinite(q)):
            bad = np.flatnonzero(~np.all(np.isfinite(q), axis=(1, 2)))[0]
            raise EvaluationError("non-finite diffusion coefficient", t, pts[bad].tolist())
        if self.dimension > 1:
            asym = np.max(np.abs(q - q.transpose(0, 2, 1)), axis=(1, 2))
            size = np.maximum(np.max(np.abs(q), axis=(1, 2)), 1e-300)
            if np.any(asym > 1e-12 * size):
                bad = int(np.argmax(asym / size))
                raise EvaluationError("diffusion matrix not symmetric", t, pts[bad].tolist())
        return q

    def b(self, t: float, x) -> np.ndarray:
        pts = as_points(x, self.dimension)
        v = np.asarray(self.drift(t, pts), dtype=float).reshape(len(pts), self.dimension)
        if not np.all(np.isfinite(v)):
            bad = np.flatnonzero(~np.all(np.isfinite(v), axis=1))[0]
            raise EvaluationError("non-finite drift coefficient", t, pts[bad].tolist())
        return v

    def drift_jac(self, t: float, x) -> np.ndarray:
        pts = as_points(x, self.dimension)
        d = self.dimension
        if self.drift_jacobian is not None:
            jac = np.asarray(self.drift_jacobian(t, pts), dtype=float).reshape(len(pts), d, d)
        else:
            jac = np.empty((len(pts), d, d))
            for k in range(d):
                h = JACOBIAN_STEP * (1.0 + np.linalg.norm(pts, axis=1))
                shift = np.zeros_like(pts)
                shift[:, k] = h
                jac[:, :, k] = (self.b(t, pts + shift) - self.b(t, pts - shift)) / (2 * h[:, None])
        if not np.all(np.isfinite(jac)):
            raise EvaluationError("non-finite drift Jacobian", t, pts[0].tolist())
        return jac

    def diffusion_jac(self, t: float, x) -> np.ndarray:
        pts = as_points(x, self.dimension)
        d = self.dimension
        if self.constant_diffusion:
            return np.zeros((len(pts), d, d, d))
        if self.diffusion_jacobian is not None:
            return np.asarray(self.diffusion_jacobian(t, pts), dtype=float).reshape(len(pts), d, d, d)
        jac = np.empty((len(pts), d, d, d))
        for k in range(d):
            h = JACOBIAN_STEP * (1.0 + np.linalg.norm(pts, axis=1))
            shift = np.zeros_like(pts)
            shift[:, k] = h
            jac[:, :, :, k] = (self.Q(t, pts + shift) - self.Q(t, pts - shift)) / (2 * h[:, None, None])
        return jac

    def min_eigenvalue(self, t: float, x) -> np.ndarray:
        return jacobi_eigenvalues(self.Q(t, x))[:, 0]

    def r_default(self, t: float, x) -> np.ndarray:
        """Largest eigenvalue of the symmetric part of the drift Jacobian."""
        jac = self.drift_jac(t, x)
        return jacobi_eigenvalues(0.5 * (jac + jac.transpose(0, 2, 1)))[:, -1]


def apply_operator(op: OperatorFamily, t: float, fld: Field, x) -> np.ndarray:
    """A(t) applied to ``fld`` at the given points, from supplied derivatives."""
    op.check_time(t)
    pts = as_points(x, op.dimension)
    q = op.Q(t, pts)
    b = op.b(t, pts)
    return np.einsum("nij,nij->n", q, fld.hess(pts)) + np.einsum("ni,ni->n", b, fld.grad(pts))


def apply_operator_fd(op: OperatorFamily, t: float, values: Callable[[np.ndarray], np.ndarray], x,
                      h: float) -> np.ndarray:
    """Second-order central-difference discretization of A(t) using field values only."""
    pts = as_points(x, op.dimension)
    d = op.dimension
    q = op.Q(t, pts)
    b = op.b(t, pts)
    f0 = values(pts)
    out = np.zeros(len(pts))
    eye = np.eye(d) * h
    for i in range(d):
        fp, fm = values(pts + eye[i]), values(pts - eye[i])
        out += b[:, i] * (fp - fm) / (2 * h)
        out += q[:, i, i] * (fp - 2 * f0 + fm) / h**2
        for j in range(i + 1, d):
            mixed = (values(pts + eye[i] + eye[j]) - values(pts + eye[i] - eye[j])
                     - values(pts - eye[i] + eye[j]) + values(pts - eye[i] - eye[j])) / (4 * h**2)
            out += 2 * q[:, i, j] * mixed
    return out


@dataclass(frozen=True)
class SampleSet:
    """Product sample set times x points over a declared box [t_lo, t_hi] x B_R."""

    times: np.ndarray
    points: np.ndarray
    box: tuple

    def __len__(self) -> int:
        return len(self.times) * len(self.points)


def sample_box(dimension: int, t_lo: float, t_hi: float, radius: float, n_t: int = 9, n_x: int = 41,
               seed: int = 0) -> SampleSet:
    """Deterministic samples: a time grid times a spatial lattice of B_R plus seeded interior draws."""
    times = np.linspace(t_lo, t_hi, n_t) if n_t > 1 else np.array([t_lo], dtype=float)
    if dimension == 1:
        pts = np.linspace(-radius, radius, n_x).reshape(-1, 1)
    else:
        per_axis = max(3, int(round(n_x ** (1.0 / dimension))) | 1)
        axes = [np.linspace(-radius, radius, per_axis)] * dimension
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dimension)
        grid = grid[np.linalg.norm(grid, axis=1) <= radius + 1e-12]
        rng = np.random.default_rng(seed)
        direction = rng.standard_normal((n_x, dimension))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = radius * rng.uniform(size=n_x) ** (1.0 / dimension)
        pts = np.vstack([grid, direction * radii[:, None]])
    return SampleSet(times=times, points=pts, box=(float(t_lo), float(t_hi), float(radius)))


def _sphere_points(dimension: int, radius: float, n: int = 64) -> np.ndarray:
    if dimension == 1:
        return np.array([[-radius], [radius]])
    if dimension == 2:
        ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
        return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    k = np.arange(4 * n) + 0.5
    phi = np.arccos(1 - 2 * k / (4 * n))
    theta = np.pi * (1 + 5**0.5) * k
    unit = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    if dimension == 3:
        return radius * unit
    raise ArgumentError("dimensions above 3 are not supported")


@dataclass(frozen=True)
class EllipticityCertificate:
    """Claimed pointwise lower eigenvalue bound kappa(t, x) with infimum kappa0."""

    kappa0: float
    kappa: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def evaluate(self, op: OperatorFamily, t: float, x) -> np.ndarray:
        if self.kappa is None:
            return op.min_eigenvalue(t, x)
        pts = as_points(x, op.dimension)
        return np.broadcast_to(np.asarray(self.kappa(t, pts), dtype=float), (len(pts),)).copy()


@dataclass(frozen=True)
class LyapunovCertificate:
    """A(t) phi <= a - c phi with phi >= 0 diverging at infinity."""

    phi: Field
    a: float
    c: float
    radii: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)

    def radial_growth_witness(self) -> list[tuple[float, float]]:
        """(radius, min of phi over the sphere of that radius) pairs."""
        return [(float(r), float(np.min(self.phi(_sphere_points(self.phi.dimension, r)))))
                for r in self.radii]


@dataclass(frozen=True)
class DissipativityData:
    """r(t, x), rho(t) and p0 of the dissipativity hypotheses."""

    rho: Callable[[float], float]
    p0: float = 2.0
    r_bound: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def r(self, op: OperatorFamily, t: float, x) -> np.ndarray:
        if self.r_bound is None:
            return op.r_default(t, x)
        pts = as_points(x, op.dimension)
        return np.broadcast_to(np.asarray(self.r_bound(t, pts), dtype=float), (len(pts),)).copy()

    def sigma_p_table(self, op: OperatorFamily, ell: EllipticityCertificate, samples: SampleSet,
                      ps: Sequence[float] = (1.5, 2.0, 3.0, 4.0)) -> dict:
        return {float(p): compute_sigma_p(op, self, p, samples, ell).value for p in ps if p >= self.p0}


@dataclass(frozen=True)
class SigmaP:
    value: float
    argmax_t: float
    argmax_x: tuple

    def __float__(self) -> float:
        return self.value


def compute_sigma_p(op: OperatorFamily, diss: DissipativityData, p: float, samples: SampleSet,
                    ell: Optional[EllipticityCertificate] = None) -> SigmaP:
    """sup over samples of r + d^3 rho^2 kappa / (4 min(p-1, 1)), with its maximizer."""
    if len(samples) == 0:
        raise ArgumentError("empty sample set")
    if p <= 1.0 or p < diss.p0 - 1e-15:
        raise ArgumentError(f"p={p} must satisfy p >= p0={diss.p0} > 1")
    ell = ell or EllipticityCertificate(kappa0=0.0)
    d = op.dimension
    best = (-np.inf, None, None)
    for t in samples.times:
        r = diss.r(op, t, samples.points)
        kappa = ell.evaluate(op, t, samples.points)
        vals = r + d**3 * diss.rho(t) ** 2 * kappa / (4 * min(p - 1.0, 1.0))
        k = int(np.argmax(vals))
        if vals[k] > best[0]:
            best = (float(vals[k]), float(t), tuple(samples.points[k].tolist()))
    return SigmaP(*best)


@dataclass
class SubHypothesis:
    name: str
    passed: bool
    worst_slack: float
    where: tuple
    detail: dict = field(default_factory=dict)


@dataclass
class HypothesisReport:
    operator: str
    box: tuple
    entries: list

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, name: str) -> SubHypothesis:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def failures(self) -> list:
        return [e.name for e in self.entries if not e.passed]


def verify_hypotheses(op: OperatorFamily, ell: EllipticityCertificate, lyap: LyapunovCertificate,
                      diss: DissipativityData, samples: SampleSet, n_directions: int = 16) -> HypothesisReport:
    """Sampled audit of regularity, ellipticity, Lyapunov and dissipativity claims."""
    if len(samples) == 0:
        raise ArgumentError("empty sample set")
    d = op.dimension
    pts = samples.points
    rng = np.random.default_rng(1234)
    dirs = np.vstack([np.eye(d), rng.standard_normal((n_directions, d))])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    worst = {k: (np.inf, None) for k in ("regularity", "ellipticity", "lyapunov", "diffusion-gradient",
                                          "drift-dissipativity")}

    def update(key, slack, t):
        k = int(np.argmin(slack))
        if slack[k] < worst[key][0]:
            worst[key] = (float(slack[k]), (float(t), tuple(pts[k].tolist())))

    phi_vals = lyap.phi(pts)
    for t in samples.times:
        op.check_time(t)
        q = op.Q(t, pts)
        op.b(t, pts)
        jb = op.drift_jac(t, pts)
        jq = op.diffusion_jac(t, pts)
        update("regularity", np.where(np.isfinite(jb).all(axis=(1, 2)) & np.isfinite(jq).all(axis=(1, 2, 3)),
                                      0.0, -np.inf), t)

        lam_min = jacobi_eigenvalues(q)[:, 0]
        kappa = ell.evaluate(op, t, pts)
        tol = 1e-12 * np.maximum(1.0, np.abs(lam_min))
        slack_ell = np.minimum(lam_min - kappa, kappa - ell.kappa0) + tol
        update("ellipticity", slack_ell, t)

        a_phi = apply_operator(op, t, lyap.phi, pts)
        slack_lyap = lyap.a - lyap.c * phi_vals - a_phi + 1e-9 * (1 + abs(lyap.a) + lyap.c * phi_vals)
        slack_lyap = np.minimum(slack_lyap, phi_vals)
        update("lyapunov", slack_lyap, t)

        grad_norm = np.sqrt(np.sum(jq**2, axis=3)).max(axis=(1, 2))
        rho_kappa = diss.rho(t) * kappa
        update("diffusion-gradient", rho_kappa - grad_norm + 1e-12 * np.maximum(1.0, grad_norm), t)

        r = diss.r(op, t, pts)
        quad = np.einsum("ki,nij,kj->nk", dirs, jb, dirs).max(axis=1)
        update("drift-dissipativity", r - quad + 1e-10 * np.maximum(1.0, np.abs(r)), t)

    witness = lyap.radial_growth_witness()
    mins = [m for _, m in witness]
    growth_ok = all(b > a for a, b in zip(mins, mins[1:]))
    sigma_p0 = compute_sigma_p(op, diss, diss.p0, samples, ell)

    entries = []
    for key, (slack, where) in worst.items():
        passed = slack >= 0.0
        detail = {}
        if key == "ellipticity":
            detail = {"kappa0": ell.kappa0}
        if key == "lyapunov":
            detail = {"a": lyap.a, "c": lyap.c, "radial_growth": witness, "growth_increasing": growth_ok}
            passed = passed and growth_ok
        if key == "drift-dissipativity":
            detail = {"p0": diss.p0, "sigma_p0": sigma_p0.value}
            passed = passed and np.isfinite(sigma_p0.value)
        entries.append(SubHypothesis(key, bool(passed), slack, where, detail))
    report = HypothesisReport(op.name, samples.box, entries)
    if not report.passed:
        log.warning("operator %s violates certificates: %s", op.name, ", ".join(report.failures()))
    return report
