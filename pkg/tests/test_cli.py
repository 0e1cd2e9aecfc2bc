import csv
import json
import subprocess
import sys
import time

import pytest

from evolaudit.cli import EXIT_AUDIT, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main, merge_reports
from evolaudit.config import load_config, parse_config
from evolaudit.errors import ConfigError


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_list_benchmarks(capsys):
    assert main(["list-benchmarks"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("ou", "ou-timevar", "cubic", "ou-arctan", "ou-damped"):
        assert name in out


def test_solve_writes_snapshots_and_manifest(tmp_path):
    cfg = write(tmp_path, 'output_dir = "out"\n[problem]\nname = "ou-arctan"\nt_end = 2.0\n')
    start = time.perf_counter()
    assert main(["solve", cfg]) == EXIT_OK
    assert time.perf_counter() - start < 60
    manifest = json.loads((tmp_path / "out" / "solution" / "manifest.json").read_text())
    assert manifest["problem"] == "ou-arctan"
    assert manifest["linear_mode"] is False
    assert len(manifest["files"]) == 31
    assert manifest["version"]


def test_zero_nonlinearity_solve_is_linear_mode(tmp_path):
    cfg = write(tmp_path, 'output_dir = "out"\n[problem]\ninline = { nonlinearity = "zero" }\nt_end = 1.0\n')
    assert main(["solve", cfg]) == EXIT_OK
    manifest = json.loads((tmp_path / "out" / "solution" / "manifest.json").read_text())
    assert manifest["linear_mode"] is True
    assert len(manifest["windows"]) == 1


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, 'output_dir = "out"\n[problem]\ninline = { nonlinearity = "linear", xi1 = 60.0 }\n'
                          't_end = 1.0\n[backend]\nn_cells = 64\ndt = 0.01\nradius = 6.0\n')
    assert main(["solve", cfg]) == EXIT_SOLVER
    trace = json.loads((tmp_path / "out" / "picard_trace.json").read_text())
    assert len(trace["trace"]) == 5
    assert "picard_trace.json" in capsys.readouterr().err


@pytest.mark.parametrize("text, fragment", [
    ('[backend]\nkind = "montecarlo"\n', "seed"),
    ('[problem\nname = "ou"\n', "line"),
    ('audits = ["no-such-audit"]\n', "audits[0].name"),
    ('audits = [{ name = "contraction", params = { bogus = 1 } }]\n', "audits[0].params.bogus"),
    ('[problem]\nname = "ou"\nt_end = -1.0\n', "problem.t_end"),
    ('colour = "blue"\n', "colour"),
    ('[backend]\nkind = "grid"\nn_cells = 2\n', "backend.n_cells"),
])
def test_configuration_errors_exit_2(tmp_path, capsys, text, fragment):
    cfg = write(tmp_path, text)
    assert main(["audit", cfg]) == EXIT_CONFIG
    assert fragment in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert main(["audit", str(tmp_path / "absent.toml")]) == EXIT_CONFIG


def test_seed_may_live_in_backend_table():
    cfg = parse_config({"backend": {"kind": "montecarlo", "seed": 3, "n_paths": 2000}})
    assert cfg.seed == 3
    with pytest.raises(ConfigError):
        parse_config({"seed": -1})


def test_output_dir_is_relative_to_config(tmp_path):
    cfg = load_config(write(tmp_path, 'output_dir = "results"\n'))
    assert cfg.output_dir == str((tmp_path / "results").resolve())


def test_empty_audit_list_passes(tmp_path):
    cfg = write(tmp_path, 'output_dir = "out"\naudits = []\n')
    assert main(["audit", cfg]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "audit_report.json").read_text())
    assert report["records"] == []


def test_too_large_ellipticity_claim_fails_audit(tmp_path, capsys):
    cfg = write(tmp_path, 'output_dir = "out"\n[problem]\ninline = { kappa0 = 1.5 }\n')
    assert main(["check-hypotheses", cfg]) == EXIT_AUDIT
    err = capsys.readouterr().err
    assert "hypothesis-ellipticity" in err
    report = json.loads((tmp_path / "out" / "audit_report.json").read_text())
    failing = [r["check"] for r in report["records"] if not r["pass"]]
    assert failing == ["hypothesis-ellipticity"]


def test_audit_report_fields(tmp_path):
    cfg = write(tmp_path, 'output_dir = "out"\naudits = ["contraction", "formulas"]\n')
    assert main(["audit", cfg]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "audit_report.json").read_text())
    rec = report["records"][0]
    assert set(rec) >= {"check", "params", "lhs", "rhs", "slack", "pass", "paper_ref", "details"}
    assert report["meta"]["config"]["problem"]["name"] == "ou-arctan"


def _report(records):
    return {"records": records}


def _rec(check, **params):
    return {"check": check, "params": params, "lhs": 0.0, "rhs": 1.0, "slack": 0.0, "pass": True}


def test_merge_is_identity_on_one_report():
    recs = [_rec("contraction", t=1.0), _rec("picard", s=0.0)]
    assert merge_reports([_report(recs)]) == recs


def test_merge_unions_and_dedupes():
    a = [_rec("contraction", t=1.0)]
    b = [_rec("contraction", t=1.0), _rec("picard", s=0.0)]
    merged = merge_reports([_report(a), _report(b)])
    assert [r["check"] for r in merged] == ["contraction", "picard"]


def test_merge_suffixes_reused_names():
    a = [_rec("contraction", t=1.0)]
    b = [_rec("contraction", t=2.0)]
    merged = merge_reports([_report(a), _report(b)])
    assert [r["check"] for r in merged] == ["contraction", "contraction#2"]


def test_report_command_writes_csv(tmp_path):
    one = tmp_path / "a.json"
    two = tmp_path / "b.json"
    one.write_text(json.dumps(_report([_rec("contraction", t=1.0, f="sin")])))
    two.write_text(json.dumps(_report([_rec("contraction", t=2.0, f="sin"), _rec("picard", s=0.0)])))
    cfg = write(tmp_path, 'output_dir = "merged"\n')
    assert main(["report", cfg, str(one), str(two)]) == EXIT_OK
    merged = json.loads((tmp_path / "merged" / "merged_report.json").read_text())
    assert merged["all_pass"] is True and len(merged["records"]) == 3
    rows = list(csv.reader(open(tmp_path / "merged" / "csv" / "contraction.csv")))
    assert rows[0] == ["f", "t", "lhs", "rhs", "slack", "pass", "skipped"]
    assert rows[1][:2] == ["sin", "1"]
    assert (tmp_path / "merged" / "csv" / "contraction_2.csv").exists()


def test_report_rejects_unreadable_input(tmp_path):
    cfg = write(tmp_path, 'output_dir = "merged"\n')
    assert main(["report", cfg, str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "evolaudit", "list-benchmarks"], capture_output=True, text=True)
    assert out.returncode == 0 and "ou-arctan" in out.stdout


def test_reports_identical_across_worker_counts(tmp_path, monkeypatch):
    # main exports the worker count; register it so it is restored afterwards
    monkeypatch.setenv("EVOLAUDIT_WORKERS", "1")
    cfg = write(tmp_path, 'seed = 11\noutput_dir = "out"\naudits = ["contraction", "evolution-law-linear"]\n'
                          '[problem]\nname = "ou-arctan"\n[backend]\nkind = "montecarlo"\nn_paths = 2000\ndt = 0.02\n')
    report = tmp_path / "out" / "audit_report.json"
    assert main(["--workers", "1", "audit", cfg]) in (EXIT_OK, EXIT_AUDIT)
    first = report.read_bytes()
    assert main(["--workers", "8", "audit", cfg]) in (EXIT_OK, EXIT_AUDIT)
    assert report.read_bytes() == first
