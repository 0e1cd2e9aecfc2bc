"""End-to-end acceptance criteria; each test prints one PASS/FAIL line."""

import math

import numpy as np
import pytest

from conftest import ou_closed_form
from evolaudit.benchmarks import benchmark, operator_names
from evolaudit.cli import main
from evolaudit.config import parse_config
from evolaudit.fields import BOUNDED_TEST_FIELDS, library
from evolaudit.inequalities import check_formulas, harnack_constants_reduction, omega_p
from evolaudit.linear_evolution import (Grid, MonteCarlo, check_contraction, check_gradient_estimate, g_apply,
                                        g_apply_many)
from evolaudit.measures import SeparableField, check_invariance, check_measure_derivative
from evolaudit.semilinear import (check_evolution_law, check_nonlinearity_certificates, check_pde_residual,
                                  check_picard, evolve, linear_nonlinearity, uniqueness_gap)
from evolaudit.suite import AuditContext, REGISTRY

POINTS = np.linspace(-3, 3, 9)
TAUS = (0.1, math.log(2), 2.0)


@pytest.fixture
def verdict(capsys):
    def announce(number, text, ok):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
        assert ok, text
    return announce


def context(problem, **extra):
    return AuditContext(parse_config({"problem": {"name": problem}, **extra}))


def run(ctx, name, **overrides):
    return REGISTRY[name].run(ctx, **{**REGISTRY[name].parameters, **overrides})


def test_criterion_01_linear_oracle(verdict, ou, fields1d):
    names = ("one", "x", "x2", "sin")
    grid_err = 0.0
    for tau in TAUS:
        for name in names:
            got = g_apply(ou.operator, ou.grid, tau, 0.0, fields1d[name], POINTS).values
            grid_err = max(grid_err, float(np.max(np.abs(got - ou_closed_form(name, POINTS, tau)))))
    mc = MonteCarlo(n_paths=100_000, dt=1e-3, seed=2024)
    hits = cells = 0
    for tau in TAUS:
        samples = g_apply_many(ou.operator, mc, tau, 0.0, [fields1d[n] for n in names], POINTS)
        for name, sample in zip(names, samples):
            exact = ou_closed_form(name, POINTS, tau)
            # the constant field has zero variance and must be reproduced exactly
            ok = np.abs(sample.values - exact) <= 3 * sample.std_errors + 1e-12
            hits += int(np.sum(ok))
            cells += len(ok)
    share = hits / cells
    verdict(1, f"grid max error {grid_err:.2e} (< 1e-3); MC within 3 SE in {share:.1%} of {cells} cells (>= 95%)",
            grid_err < 1e-3 and share >= 0.95)


def test_criterion_02_contraction(verdict):
    failures, count = [], 0
    for name in operator_names():
        bm = benchmark(name)
        d = bm.operator.dimension
        fields = library(d)
        pts = POINTS.reshape(-1, 1) if d == 1 else np.stack(np.meshgrid(*([np.linspace(-2, 2, 5)] * d),
                                                                       indexing="ij"), -1).reshape(-1, d)
        for f in BOUNDED_TEST_FIELDS:
            for s, t in ((0.0, 0.5), (0.0, 2.0)):
                rec = check_contraction(bm.operator, bm.grid, t, s, fields[f], pts)
                count += 1
                if not rec.passed:
                    failures.append((name, f, t))
    verdict(2, f"{count} contraction records over {len(operator_names())} benchmarks, failing: {failures}",
            not failures)


def test_criterion_03_gradient_estimate(verdict, ou, fields1d):
    records = []
    for p in (1.0, 2.0):
        for f in ("sin", "tanh", "bump"):
            for t in (0.5, 1.0):
                records.append(check_gradient_estimate(ou.operator, ou.dissipativity, ou.grid, p, t, 0.0, fields1d[f],
                                                       POINTS, sigma_p=-1.0))
    ok = all(r.passed for r in records)
    teeth = max(r.details["max_lhs_over_rhs"] for r in records)
    verdict(3, f"{len(records)} records pass: {ok}; max lhs/rhs = {teeth:.3f} (>= 0.1)", ok and teeth >= 0.1)


def test_criterion_04_invariance(verdict, fields1d):
    worst, failing = 0.0, 0
    for name in ("ou", "ou-timevar"):
        bm = benchmark(name)
        fam = bm.measure_family(0.0, 5.0)
        for f in BOUNDED_TEST_FIELDS:
            for s in (0.0, 0.5, 1.0):
                for t in (1.5, 2.5, 3.5):
                    rec = check_invariance(bm.operator, bm.grid, fam, t, s, fields1d[f])
                    worst = max(worst, rec.lhs)
                    failing += int(not rec.passed)
    verdict(4, f"worst |int G f dmu_t - int f dmu_s| = {worst:.2e} (< 1e-3), {failing} failing records",
            worst < 1e-3 and failing == 0)


def test_criterion_05_measure_derivative(verdict, ou_family, fields1d):
    fld = SeparableField(np.cos, lambda r: -np.sin(r), fields1d["wave"], "cos(r)*wave")
    rec = check_measure_derivative(benchmark("ou").operator, ou_family, fld, list(np.linspace(0.5, 5.0, 20)))
    rel = rec.details["relative_error"]
    verdict(5, f"relative error {rel:.2e} on 20 times (< 1e-3)", rel < 1e-3 and rec.passed)


def test_criterion_06_picard(verdict):
    ctx = context("ou-arctan")
    sol = ctx.solve()
    rec = check_picard(sol, 0.55, 15)
    worst = max(w.max_ratio for w in sol.windows)
    sweeps = max(w.iterations for w in sol.windows)
    gap = uniqueness_gap(sol, ctx.solve(initial="zero"))
    ok = rec.passed and worst <= 0.55 and sweeps <= 15 and gap < 2 * sol.tol_fix
    verdict(6, f"max ratio {worst:.4f} (<= 0.55), max sweeps {sweeps} (<= 15), restart gap {gap:.1e} "
               f"(< {2 * sol.tol_fix:.1e})", ok)


def test_criterion_07_linear_closed_form(verdict, ou, fields1d):
    sol = evolve(ou.operator, ou.grid, linear_nonlinearity(-1.0), 0.0, fields1d["x"], 2.0)
    err = max(float(np.max(np.abs(sol.evaluate(t, POINTS) - POINTS * math.exp(-2 * t))))
              for t in np.linspace(0.0, 2.0, 41))
    verdict(7, f"max |u - x e^(-2(t-s))| = {err:.2e} over t - s in [0, 2] (< 1e-3)", err < 1e-3)


def test_criterion_08_evolution_law(verdict):
    ctx = context("ou-arctan")
    triples = REGISTRY["evolution-law"].parameters["triples"]
    records = [check_evolution_law(ctx.op, ctx.grid, ctx.nl, ctx.datum, a, b, c) for a, b, c in triples]
    ratio = max(r.lhs / r.slack for r in records)
    gap = max(r.lhs for r in records)
    verdict(8, f"{len(records)} triples, worst gap {gap:.1e}, worst gap / (2 Richardson) = {ratio:.1e} (<= 1)",
            all(r.passed for r in records))


def test_criterion_09_pde_residual(verdict, ou, fields1d):
    nl = context("ou-arctan").nl
    grids = [Grid(radius=8.0, n_cells=128 * 2**k, dt=4e-3 / 2**k) for k in range(3)]
    sols = [evolve(ou.operator, g, nl, 0.0, fields1d["sin"], 1.2) for g in grids]
    rec = check_pde_residual(sols, ou.operator, nl, [0.5, 1.0])
    orders = rec.details["observed_orders"]
    verdict(9, f"observed orders {', '.join(f'{o:.2f}' for o in orders)} (>= 1.7)",
            rec.passed and min(orders) >= 1.7)


def test_criterion_10_hypercontractivity(verdict):
    ctx = context("ou-arctan")
    cert, _ = check_nonlinearity_certificates(ctx.nl, 1)
    records = run(ctx, "hypercontractivity")
    taus = [r.params["t"] - r.params["s"] for r in records]
    xis = (cert.params["xi0"], cert.params["xi1"], cert.params["xi2"])
    ok = (cert.passed and xis == (0.0, 0.0, 0.0) and all(r.passed for r in records)
          and taus == [0.25, 0.5, 1.0, 2.0] and all((r.params["p"], r.params["gamma"]) == (2.0, 2.0) for r in records))
    verdict(10, f"certificate xi = {xis} audited: {cert.passed}; p = gamma = 2; K = {ctx.lsi_constant():.4f}; "
                f"{sum(r.passed for r in records)}/{len(records)} times pass", ok)


def test_criterion_11_harnack(verdict):
    ctx = context("ou-arctan")
    records = run(ctx, "harnack")
    reduction = max(harnack_constants_reduction(ctx.hyper_params(p), p, tau) for p in (1.5, 2.0) for tau in (0.5, 1.0))
    ok = all(r.passed and r.details["pairs"] == 25 for r in records) and len(records) == 4 and reduction <= 1e-12
    verdict(11, f"{len(records)} (p, t-s) cases on 5x5 grids pass: {all(r.passed for r in records)}; "
                f"x = y reduction error {reduction:.1e}", ok)


def test_criterion_12_stability(verdict):
    ctx = context("ou-damped")
    hp = ctx.hyper_params(2.0)
    w = omega_p(hp)
    l2 = run(ctx, "stability", orders=[0])[0]
    sup = run(ctx, "stability-sup", orders=[0])[0]
    ok = (w == -1.0 and l2.passed and sup.passed and l2.details["slope"] <= w + 0.1 * abs(w)
          and sup.details["slope"] <= hp.xi1 + 0.1 * abs(hp.xi1))
    verdict(12, f"L2 slope {l2.details['slope']:.3f} <= {w + 0.1 * abs(w):.2f}; sup slope "
                f"{sup.details['slope']:.3f} <= {hp.xi1 + 0.1 * abs(hp.xi1):.2f}", ok)


def test_criterion_13_formulas(verdict):
    rec = check_formulas()
    verdict(13, f"{rec.params['n_identities']} identities, worst error {rec.lhs:.1e} "
                f"({rec.details['worst_identity']})", rec.passed)


def test_criterion_14_determinism(verdict, tmp_path, monkeypatch):
    monkeypatch.setenv("EVOLAUDIT_WORKERS", "1")
    cfg = tmp_path / "mc.toml"
    cfg.write_text('seed = 20240611\noutput_dir = "out"\n'
                   'audits = ["contraction", "evolution-law-linear", "invariance", "duhamel-bound"]\n'
                   '[problem]\nname = "ou-arctan"\n'
                   '[backend]\nkind = "montecarlo"\nn_paths = 4000\ndt = 0.01\nblock = 1024\n', encoding="utf-8")
    report = tmp_path / "out" / "audit_report.json"
    main(["--workers", "1", "audit", str(cfg)])
    one = report.read_bytes()
    main(["--workers", "8", "audit", str(cfg)])
    eight = report.read_bytes()
    verdict(14, f"reports with 1 and 8 workers are byte-identical ({len(one)} bytes)", one == eight and len(one) > 0)
