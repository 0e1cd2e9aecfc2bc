"""Run configuration: a TOML file describing the problem, backend, measures and audits."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .benchmarks import Benchmark, Problem, benchmark, operator_names, problem, problem_names
from .errors import ArgumentError, ConfigError
from .fields import exp_quadratic, library, one_plus_square
from .linear_evolution import Grid, MonteCarlo
from .operator_model import DissipativityData, EllipticityCertificate, LyapunovCertificate, OperatorFamily
from .semilinear import (Nonlinearity, arctan_damping, damped_arctan, forced_arctan, gradient_coupled,
                         linear_nonlinearity, zero_nonlinearity)

NONLINEARITIES = {
    "zero": lambda spec: zero_nonlinearity(),
    "arctan": lambda spec: arctan_damping(),
    "damped-arctan": lambda spec: damped_arctan(spec.get("rate", 1.0)),
    "linear": lambda spec: linear_nonlinearity(spec.get("xi1", -1.0)),
    "gradient": lambda spec: gradient_coupled(spec.get("eps", 0.1)),
    "forced-arctan": lambda spec: forced_arctan(spec.get("amplitude", 0.1)),
}

PROBLEM_KEYS = {"name", "inline", "datum", "s", "t_end"}
INLINE_KEYS = {"name", "rate", "diffusion", "forcing", "nonlinearity", "kappa0", "xi1", "rate_psi", "eps",
               "amplitude"}
GRID_KEYS = {"kind", "radius", "n_cells", "dt"}
MC_KEYS = {"kind", "n_paths", "dt", "block", "seed"}
MEASURE_KEYS = {"t_lo", "t_hi", "horizon", "n_particles"}
TOP_KEYS = {"problem", "backend", "measure", "audits", "output_dir", "seed"}


def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _number(table: dict, key: str, path: str, default: Optional[float] = None, positive: bool = False) -> float:
    value = table.get(key, default)
    if value is None:
        _fail(f"{path}.{key}", "missing value")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{path}.{key}", f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        _fail(f"{path}.{key}", f"expected a {'positive ' if positive else ''}finite number, got {value!r}")
    return value


def _integer(table: dict, key: str, path: str, default: Optional[int] = None, minimum: int = 1) -> int:
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        _fail(f"{path}.{key}", f"expected an integer >= {minimum}, got {value!r}")
    return int(value)


def _unknown(table: dict, allowed: set, path: str):
    extra = sorted(set(table) - allowed)
    if extra:
        _fail(f"{path}.{extra[0]}" if path else extra[0], f"unknown key (allowed: {', '.join(sorted(allowed))})")


def inline_problem(spec: dict) -> Problem:
    """1D Ornstein-Uhlenbeck-type problem b = rate x + forcing sin t, Q = diffusion, with derived certificates.

    ``kappa0`` overrides the ellipticity claim, which is then audited like any
    other certificate.
    """
    path = "problem.inline"
    _unknown(spec, INLINE_KEYS, path)
    rate = _number(spec, "rate", path, -1.0)
    q = _number(spec, "diffusion", path, 1.0, positive=True)
    forcing = _number(spec, "forcing", path, 0.0)
    if rate >= 0:
        _fail(f"{path}.rate", "the drift rate must be negative for a tight family of measures")
    name = str(spec.get("name", "inline"))
    kappa0 = _number(spec, "kappa0", path, q, positive=True)
    nl_name = spec.get("nonlinearity", "zero")
    if nl_name not in NONLINEARITIES:
        _fail(f"{path}.nonlinearity", f"unknown nonlinearity {nl_name!r} (known: {', '.join(NONLINEARITIES)})")
    nl_spec = {"xi1": spec.get("xi1", -1.0), "rate": spec.get("rate_psi", 1.0), "eps": spec.get("eps", 0.1),
               "amplitude": spec.get("amplitude", 0.1)}

    def diffusion(t, x):
        return np.full((len(x), 1, 1), q)

    def drift(t, x):
        return rate * x + forcing * np.sin(t)

    op = OperatorFamily(1, diffusion, drift, name=name,
                        drift_jacobian=lambda t, x: np.full((len(x), 1, 1), rate), constant_diffusion=True,
                        autonomous=forcing == 0.0,
                        linear_drift=lambda t: (np.array([[rate]]), np.array([forcing * np.sin(t)])))
    # A(1 + x^2) = 2q + 2 rate x^2 + 2 forcing sin(t) x <= (2q - rate + forcing^2/|rate|) + rate (1 + x^2)
    a = 2 * q - rate + forcing**2 / abs(rate)
    bm = Benchmark(name, f"inline OU: Q = {q:g}, b = {rate:g} x + {forcing:g} sin t", op,
                   EllipticityCertificate(kappa0), LyapunovCertificate(one_plus_square(1), a, -rate),
                   DissipativityData(lambda t: 0.0), sigma1=rate, relaxation_rate=rate)
    return Problem(name, bm, NONLINEARITIES[nl_name](nl_spec), bm.description)


@dataclass
class RunConfig:
    """Parsed configuration with every default filled in."""

    problem: dict
    backend: dict
    measure: dict
    audits: list
    output_dir: str
    seed: Optional[int]
    source: str = ""
    _problem_cache: Any = field(default=None, repr=False, compare=False)

    def build_problem(self) -> Problem:
        if self._problem_cache is None:
            if "inline" in self.problem:
                self._problem_cache = inline_problem(self.problem["inline"])
            else:
                self._problem_cache = problem(self.problem["name"])
        return self._problem_cache

    def build_backend(self):
        b = self.backend
        if b["kind"] == "grid":
            return Grid(radius=b["radius"], n_cells=b["n_cells"], dt=b["dt"])
        return MonteCarlo(n_paths=b["n_paths"], dt=b["dt"], seed=self.seed, block=b["block"])

    def solver_grid(self) -> Grid:
        """Lattice used by the semilinear solver: the configured grid, else the benchmark default."""
        backend = self.build_backend()
        return backend if isinstance(backend, Grid) else self.build_problem().benchmark.grid

    def datum(self):
        return library(self.build_problem().benchmark.operator.dimension)[self.problem["datum"]]

    def resolved(self) -> dict:
        """All settings, defaults included, for manifests and reports."""
        return {"problem": copy.deepcopy(self.problem), "backend": dict(self.backend),
                "measure": dict(self.measure), "audits": [{"name": n, "params": dict(p)} for n, p in self.audits],
                "output_dir": self.output_dir, "seed": self.seed}


def _parse_problem(raw: Any) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        _fail("problem", "expected a table")
    _unknown(raw, PROBLEM_KEYS, "problem")
    out: dict = {}
    if "inline" in raw:
        if "name" in raw:
            _fail("problem", "give either name or inline, not both")
        if not isinstance(raw["inline"], dict):
            _fail("problem.inline", "expected a table")
        out["inline"] = dict(raw["inline"])
        try:
            inline_problem(out["inline"])
        except ArgumentError as exc:
            _fail("problem.inline", str(exc))
    else:
        name = raw.get("name", "ou-arctan")
        if name not in problem_names() and name not in operator_names():
            _fail("problem.name", f"unknown problem {name!r} (known: {', '.join(problem_names() + operator_names())})")
        out["name"] = name
    datum = raw.get("datum", "sin")
    if datum not in library(1):
        _fail("problem.datum", f"unknown datum {datum!r} (known: {', '.join(library(1))})")
    out["datum"] = datum
    out["s"] = _number(raw, "s", "problem", 0.0)
    out["t_end"] = _number(raw, "t_end", "problem", out["s"] + 3.0)
    if out["t_end"] <= out["s"]:
        _fail("problem.t_end", "must exceed problem.s")
    return out


def _parse_backend(raw: Any, default_grid: Grid, seed: Optional[int]) -> tuple[dict, Optional[int]]:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        _fail("backend", "expected a table")
    kind = raw.get("kind", "grid")
    if kind == "grid":
        _unknown(raw, GRID_KEYS, "backend")
        return {"kind": "grid", "radius": _number(raw, "radius", "backend", default_grid.radius, positive=True),
                "n_cells": _integer(raw, "n_cells", "backend", default_grid.n_cells, minimum=4),
                "dt": _number(raw, "dt", "backend", default_grid.dt, positive=True)}, seed
    if kind == "montecarlo":
        _unknown(raw, MC_KEYS, "backend")
        if "seed" in raw:
            seed = _integer(raw, "seed", "backend", minimum=0)
        if seed is None:
            _fail("seed", "a Monte Carlo backend needs an explicit seed")
        return {"kind": "montecarlo", "n_paths": _integer(raw, "n_paths", "backend", 100_000),
                "dt": _number(raw, "dt", "backend", 1e-3, positive=True),
                "block": _integer(raw, "block", "backend", 4096)}, seed
    _fail("backend.kind", f"expected 'grid' or 'montecarlo', got {kind!r}")


def _parse_measure(raw: Any, t_end: float) -> dict:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        _fail("measure", "expected a table")
    _unknown(raw, MEASURE_KEYS, "measure")
    out = {"t_lo": _number(raw, "t_lo", "measure", 0.0),
           "t_hi": _number(raw, "t_hi", "measure", max(10.0, t_end + 1.0)),
           "n_particles": _integer(raw, "n_particles", "measure", 4000, minimum=1000)}
    if "horizon" in raw:
        out["horizon"] = _number(raw, "horizon", "measure", positive=True)
    if out["t_hi"] <= out["t_lo"]:
        _fail("measure.t_hi", "must exceed measure.t_lo")
    return out


def _parse_audits(raw: Any) -> list:
    from .suite import FULL_SUITE, REGISTRY
    raw = [] if raw is None else raw
    if not isinstance(raw, list):
        _fail("audits", "expected a list of audit names or tables")
    out = []
    for k, item in enumerate(raw):
        path = f"audits[{k}]"
        if isinstance(item, str):
            name, params = item, {}
        elif isinstance(item, dict):
            if "name" not in item:
                _fail(path, "missing name")
            name = item["name"]
            params = item.get("params", {})
            if not isinstance(params, dict):
                _fail(f"{path}.params", "expected a table")
            _unknown(item, {"name", "params"}, path)
        else:
            _fail(path, f"expected a string or table, got {item!r}")
        if name == "full":
            if params:
                _fail(f"{path}.params", "the full suite takes no parameters")
            out += [(n, {}) for n in FULL_SUITE]
            continue
        if name not in REGISTRY:
            _fail(f"{path}.name", f"unknown audit {name!r} (known: full, {', '.join(REGISTRY)})")
        allowed = REGISTRY[name].parameters
        bad = sorted(set(params) - set(allowed))
        if bad:
            _fail(f"{path}.params.{bad[0]}", f"unknown parameter (allowed: {', '.join(sorted(allowed)) or 'none'})")
        out.append((name, dict(params)))
    return out


def parse_config(data: dict, source: str = "<dict>") -> RunConfig:
    """Validate a decoded TOML document and fill in defaults."""
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a table")
    _unknown(data, TOP_KEYS, "")
    seed = data.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64):
        _fail("seed", f"expected a 64-bit non-negative integer, got {seed!r}")
    prob = _parse_problem(data.get("problem"))
    default_grid = (inline_problem(prob["inline"]).benchmark.grid if "inline" in prob
                    else (benchmark(prob["name"]) if prob["name"] in operator_names()
                          else problem(prob["name"]).benchmark).grid)
    backend, seed = _parse_backend(data.get("backend"), default_grid, seed)
    measure = _parse_measure(data.get("measure"), prob["t_end"])
    audits = _parse_audits(data.get("audits"))
    out_dir = data.get("output_dir", "evolaudit-out")
    if not isinstance(out_dir, str) or not out_dir:
        _fail("output_dir", "expected a non-empty string")
    return RunConfig(prob, backend, measure, audits, out_dir, seed, source)


def load_config(path) -> RunConfig:
    """Read and validate a TOML configuration file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read configuration ({exc.strerror})") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    cfg = parse_config(data, str(p))
    if not Path(cfg.output_dir).is_absolute():
        cfg.output_dir = str((p.parent / cfg.output_dir).resolve())
    return cfg
