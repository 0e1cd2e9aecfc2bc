"""Audit records and the registry of statement anchors they cite."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

# Each check cites the statement it audits. Anchors are descriptive names of the
# inequality or identity being tested.
ANCHORS = {
    "hypothesis-regularity": "standing hypotheses: coefficient regularity",
    "hypothesis-ellipticity": "standing hypotheses: uniform ellipticity with positive infimum",
    "hypothesis-lyapunov": "standing hypotheses: Lyapunov function with A(t)phi <= a - c phi",
    "hypothesis-diffusion-gradient": "standing hypotheses: |grad q_ij| <= rho kappa",
    "hypothesis-drift-dissipativity": "standing hypotheses: <grad b xi, xi> <= r |xi|^2 and sigma_p0",
    "nonlinearity-certificates": "sign condition u psi <= xi0|u| + xi1 u^2 + xi2|u||v| and Lipschitz bound",
    "contraction": "sup-norm contraction of G(t,s)",
    "gradient-estimate": "pointwise gradient estimate |grad G f|^p <= e^{p sigma_p (t-s)} G|grad f|^p",
    "evolution-law-linear": "evolution law G(t,s) = G(t,r)G(r,s)",
    "linear-closed-form": "closed-form Ornstein-Uhlenbeck transition law",
    "invariance": "invariance of the evolution system of measures",
    "measure-derivative": "derivative of r -> integral of f(r,.) against mu_r",
    "logsobolev": "logarithmic Sobolev inequality with constant K",
    "lsi-epsilon": "defective logarithmic Sobolev inequality with nu(sigma)",
    "tightness": "tightness of the evolution system of measures",
    "duhamel-bound": "sup-norm bound of the Duhamel term",
    "picard": "contraction of the fixed-point map on Y_delta",
    "uniqueness": "uniqueness of the fixed point: two initial iterates agree",
    "local-estimates": "Y_delta bounds for the mild solution and its data dependence",
    "lp-estimates": "L^p(mu_t) bounds for the mild solution and its data dependence",
    "pde-residual": "the mild solution is a classical solution",
    "continuity-in-data": "continuity of N(t,s) under bounded pointwise convergence",
    "evolution-law": "evolution law N(t,s) = N(t,r)N(r,s)",
    "hypercontractivity": "hypercontractivity of N(t,s) with exponent p_gamma(t)",
    "gradient-hyper": "gradient hypercontractivity with blow-up profile c0(t-s)",
    "supercontractivity": "supercontractivity of N(t,s) with explicit c2",
    "harnack": "Harnack-type pointwise estimate with weight Theta",
    "ultraboundedness": "ultraboundedness of N(t,s) with explicit c4, c5",
    "ultraboundedness-gradient": "gradient ultraboundedness with fitted constant",
    "stability": "exponential stability of the null solution in L^p(mu_t)",
    "stability-sup": "exponential stability of the null solution in sup norm",
    "formulas": "closed-form exponent and rate identities",
}


def anchor(check: str) -> str:
    base = check.split("#", 1)[0]
    return ANCHORS.get(base, "artifact plumbing")


def _clean(value: Any) -> Any:
    """Convert numpy scalars and non-finite floats into stable JSON values."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


@dataclass
class AuditRecord:
    """One audited inequality: passes when lhs <= rhs + slack.

    ``skipped`` carries a reason when a precondition of the statement is not
    met; a skipped record is not a violation and counts as passing.
    """

    check: str
    params: dict
    lhs: float
    rhs: float
    slack: float
    passed: bool
    details: dict = field(default_factory=dict)
    skipped: str | None = None

    @property
    def paper_ref(self) -> str:
        return anchor(self.check)

    @property
    def margin(self) -> float:
        return self.rhs + self.slack - self.lhs

    def to_dict(self) -> dict:
        out = {
            "check": self.check,
            "params": self.params,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "pass": bool(self.passed),
            "paper_ref": self.paper_ref,
            "details": self.details,
        }
        if self.skipped is not None:
            out["skipped"] = self.skipped
        return _clean(out)

    def with_slack(self, slack: float) -> "AuditRecord":
        """Re-evaluate the same comparison under a different slack."""
        return AuditRecord(self.check, self.params, self.lhs, self.rhs, slack,
                           self.skipped is not None or self.lhs <= self.rhs + slack, self.details, self.skipped)


def make_record(check: str, params: dict, lhs, rhs, slack, details: dict | None = None) -> AuditRecord:
    """Aggregate pointwise comparisons into a record reporting the worst point."""
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    slack = np.broadcast_to(np.asarray(slack, dtype=float), lhs.shape)
    excess = lhs - rhs - slack
    excess = np.where(np.isnan(excess), np.inf, excess)
    k = int(np.argmax(excess)) if excess.size else 0
    passed = bool(np.all(excess <= 0.0))
    info = dict(details or {})
    if lhs.size > 1:
        info.setdefault("worst_index", k)
        info.setdefault("n_compared", int(lhs.size))
    return AuditRecord(check, params, float(lhs[k]), float(rhs[k]), float(slack[k]), passed, info)


def skipped_record(check: str, params: dict, reason: str, details: dict | None = None) -> AuditRecord:
    return AuditRecord(check, params, float("nan"), float("nan"), 0.0, True, dict(details or {}), reason)


def dumps(records: list, meta: dict | None = None) -> str:
    """Stable JSON text for a list of records (sorted keys, UTF-8 safe)."""
    payload = {"records": [r.to_dict() if isinstance(r, AuditRecord) else _clean(r) for r in records]}
    if meta is not None:
        payload["meta"] = _clean(meta)
    payload["all_pass"] = all(r["pass"] for r in payload["records"])
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
