"""Command-line entry point: solve, audit, report, list-benchmarks, check-hypotheses."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .audit import dumps
from .benchmarks import catalogue
from .config import RunConfig, load_config
from .errors import ArgumentError, ConfigError, WindowFailure
from .linear_evolution import WORKERS_ENV
from .semilinear import evolve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_AUDIT = 4

REPORT_NAME = "audit_report.json"
MERGED_NAME = "merged_report.json"
TRACE_NAME = "picard_trace.json"

log = logging.getLogger("evolaudit")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def cmd_solve(cfg: RunConfig, n_snapshots: int = 31) -> int:
    """Run evolve for the configured problem and write CSV snapshots plus a manifest."""
    prob = cfg.build_problem()
    backend = cfg.build_backend()
    s, t_end = cfg.problem["s"], cfg.problem["t_end"]
    out = Path(cfg.output_dir)
    try:
        sol = evolve(prob.benchmark.operator, backend, prob.nonlinearity, s, cfg.datum(), t_end)
    except WindowFailure as exc:
        trace = out / TRACE_NAME
        _write_json(trace, {"error": str(exc), "start": exc.start, "end": exc.end, "trace": exc.trace})
        print(f"solver failure: {exc}; Picard trace written to {trace}", file=sys.stderr)
        return EXIT_SOLVER
    times = np.linspace(s, t_end, n_snapshots)
    target = out / "solution"
    sol.write(target, times, meta={"config": cfg.resolved(), "problem": prob.name, "psi": prob.nonlinearity.name,
                                   "version": __version__})
    print(f"solution written to {target} ({len(times)} snapshots, {len(sol.windows)} windows, "
          f"linear mode: {sol.linear_mode})")
    return EXIT_OK


def cmd_audit(cfg: RunConfig) -> int:
    """Run the configured audits and write the JSON report; exit 4 when any record fails."""
    from .suite import run_audits
    records = run_audits(cfg)
    text = dumps(records, {"config": cfg.resolved(), "version": __version__})
    path = Path(cfg.output_dir) / REPORT_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    failing = [r for r in records if not r.passed]
    for r in records:
        state = "SKIP" if r.skipped else ("PASS" if r.passed else "FAIL")
        print(f"{state}  {r.check:28s} lhs={r.lhs:.6g} rhs={r.rhs:.6g} slack={r.slack:.3g}")
    print(f"{len(records)} records, {len(failing)} failing; report written to {path}")
    if failing:
        for r in failing:
            print(f"failing: {r.check} {json.dumps(r.to_dict()['params'], sort_keys=True)}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def merge_reports(reports: Sequence[dict]) -> list:
    """Union of record lists; a check name reused by a later report with new params gets a '#k' suffix."""
    merged: list = []
    seen = set()
    names = set()
    for k, rep in enumerate(reports, start=1):
        local_names = set()
        for rec in rep.get("records", []):
            key = (rec["check"], json.dumps(rec.get("params", {}), sort_keys=True))
            if key in seen:
                continue
            rec = dict(rec)
            if rec["check"] in names and k > 1:
                rec["check"] = f"{rec['check']}#{k}"
            seen.add(key)
            local_names.add(key[0])
            merged.append(rec)
        names |= local_names
    return merged


def _csv_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return "%.17g" % v
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def write_check_csvs(records: list, directory: Path) -> list:
    """One CSV per check: scalar params as columns, then lhs, rhs, slack, pass."""
    directory.mkdir(parents=True, exist_ok=True)
    by_check: dict = {}
    for rec in records:
        by_check.setdefault(rec["check"], []).append(rec)
    written = []
    for check in sorted(by_check):
        rows = by_check[check]
        keys = sorted({k for r in rows for k in r.get("params", {})})
        path = directory / (check.replace("#", "_") + ".csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(keys + ["lhs", "rhs", "slack", "pass", "skipped"])
            for r in rows:
                p = r.get("params", {})
                w.writerow([_csv_value(p.get(k)) for k in keys]
                           + [_csv_value(r.get(c)) for c in ("lhs", "rhs", "slack", "pass", "skipped")])
        written.append(path)
    return written


def cmd_report(cfg: Optional[RunConfig], paths: Sequence[str], output_dir: Optional[str] = None) -> int:
    """Merge audit reports and emit per-check CSV series for external plotting."""
    reports = []
    for p in paths:
        try:
            reports.append(json.loads(Path(p).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{p}: cannot read report ({exc})") from exc
    merged = merge_reports(reports)
    out = Path(output_dir or (cfg.output_dir if cfg else "."))
    payload = {"records": merged, "sources": [str(p) for p in paths],
               "all_pass": all(r.get("pass", False) for r in merged)}
    _write_json(out / MERGED_NAME, payload)
    files = write_check_csvs(merged, out / "csv")
    print(f"merged {len(merged)} records from {len(paths)} reports into {out / MERGED_NAME}; {len(files)} CSV files")
    return EXIT_OK


def cmd_list_benchmarks() -> int:
    for name, kind, text in catalogue():
        print(f"{name:16s} {kind:9s} {text}")
    return EXIT_OK


def cmd_check_hypotheses(cfg: RunConfig) -> int:
    """Audit the operator and nonlinearity certificates only."""
    cfg.audits = [("hypotheses", {}), ("nonlinearity-certificates", {})]
    return cmd_audit(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evolaudit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"evolaudit {__version__}")
    parser.add_argument("--workers", type=int, default=None,
                        help=f"worker threads for Monte Carlo (overrides ${WORKERS_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in (("solve", "run the semilinear solver"), ("audit", "run the configured audits"),
                       ("check-hypotheses", "audit operator and nonlinearity certificates")):
        p = sub.add_parser(verb, help=text)
        p.add_argument("config", help="TOML configuration file")
    rep = sub.add_parser("report", help="merge audit reports and write per-check CSVs")
    rep.add_argument("config", help="TOML configuration file (its output_dir receives the merge)")
    rep.add_argument("reports", nargs="+", help="audit report JSON files")
    rep.add_argument("--output-dir", default=None)
    sub.add_parser("list-benchmarks", help="list built-in operators and problems")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers is not None:
        os.environ[WORKERS_ENV] = str(args.workers)
    try:
        if args.verb == "list-benchmarks":
            return cmd_list_benchmarks()
        cfg = load_config(args.config)
        if args.verb == "solve":
            return cmd_solve(cfg)
        if args.verb == "audit":
            return cmd_audit(cfg)
        if args.verb == "check-hypotheses":
            return cmd_check_hypotheses(cfg)
        return cmd_report(cfg, args.reports, args.output_dir)
    except (ConfigError, ArgumentError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
