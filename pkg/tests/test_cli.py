"""Command line interface: every subcommand plus exit-code contract."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from qpcl.cli import main

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


@pytest.fixture()
def runner():
    return CliRunner()


def run(runner, *args):
    return runner.invoke(main, [str(a) for a in args])


def test_parse(runner):
    r = run(runner, "parse", CORPUS / "cr.qpcl")
    assert r.exit_code == 0
    assert "protocol: CR" in r.output
    assert "nonce-preserving: True" in r.output
    rj = run(runner, "parse", CORPUS / "cr.qpcl", "--json")
    d = json.loads(rj.output)
    assert d["roles"] == "Init, Resp" and d["statements"] == 12


def test_parse_usage_error(runner, tmp_path):
    bad = tmp_path / "bad.qpcl"
    bad.write_text("protocol Broken {")
    r = run(runner, "parse", bad)
    assert r.exit_code == 2
    r2 = run(runner, "parse", tmp_path / "nope.qpcl")
    assert r2.exit_code == 2  # click's own usage error for a missing file


def test_simulate(runner):
    r = run(runner, "simulate", CORPUS / "cr_eta2.scenario")
    assert r.exit_code == 0
    assert "traces: 16" in r.output
    assert "measure: 1" in r.output
    s = run(runner, "simulate", CORPUS / "cr_eta2.scenario", "--mode", "sample:5:3")
    assert s.exit_code == 0 and "samples: 5" in s.output
    bad = run(runner, "simulate", CORPUS / "cr_eta2.scenario", "--mode", "wat")
    assert bad.exit_code == 2


def test_eval_exit_codes(runner):
    ok = run(runner, "eval", CORPUS / "cr_eta2.scenario",
             "-f", "B{0} (exists X. (exists m. Send(X, m)))")
    assert ok.exit_code == 0, ok.output
    assert "verdict: True" in ok.output
    no = run(runner, "eval", CORPUS / "cr_eta2.scenario",
             "-f", "B{0} (exists m. New(principal(Eve), m))")
    assert no.exit_code == 1
    assert "verdict: False" in no.output
    usage = run(runner, "eval", CORPUS / "cr_eta2.scenario", "-f", "Frob(X)")
    assert usage.exit_code == 2


def test_check_proof(runner):
    r = run(runner, "check-proof", CORPUS / "cr.qpclproof",
            "-p", CORPUS / "cr.qpcl", "--scenario", CORPUS / "cr.scenario")
    assert r.exit_code == 0, r.output
    assert "accepted: True" in r.output
    assert "bound: eVER + 2*eFS2" in r.output
    assert "safety-certified: True" in r.output
    assert "numeric-bound: 99/128" in r.output


def test_check_proof_rejects(runner, tmp_path):
    mutated = tmp_path / "mut.qpclproof"
    text = (CORPUS / "cr.qpclproof").read_text()
    mutated.write_text(text.replace("by PCIMP-B(179, 174)", "by PCIMP-B(174, 179)"))
    r = run(runner, "check-proof", mutated, "-p", CORPUS / "cr.qpcl")
    assert r.exit_code == 1
    assert "accepted: False" in r.output
    assert "step 180" in r.output


def test_bounds(runner):
    r = run(runner, "bounds", CORPUS / "cr.scenario")
    assert r.exit_code == 0
    assert "eps_ver: 1/128" in r.output
    assert "value: 99/128" in r.output
    custom = run(runner, "bounds", CORPUS / "cr.scenario", "--expr", "eVER")
    assert "value: 1/128" in custom.output
    bad = run(runner, "bounds", CORPUS / "cr.scenario", "--expr", "eNOPE")
    assert bad.exit_code == 2


def test_monitor_ok_and_violated(runner, tmp_path):
    ok = run(runner, "monitor", CORPUS / "crmini_random.scenario", "--axiom", "fs2")
    assert ok.exit_code == 0, ok.output
    assert "bad_probability: 1/8" in ok.output
    assert "violated: False" in ok.output
    report = tmp_path / "report.txt"
    bad = run(runner, "monitor", CORPUS / "crmini_const.scenario",
              "--axiom", "fs2", "--report", report)
    assert bad.exit_code == 1
    assert "violated: True" in bad.output
    assert "bad_probability: 1" in report.read_text()


def test_monitor_json_deterministic(runner):
    a = run(runner, "monitor", CORPUS / "crmini_random.scenario",
            "--axiom", "fs2", "--json")
    b = run(runner, "monitor", CORPUS / "crmini_random.scenario",
            "--axiom", "fs2", "--json")
    assert a.exit_code == b.exit_code == 0
    assert a.output == b.output
    d = json.loads(a.output)
    assert d["bound"] == "1/8" and d["axiom"] == "fs2"


def test_threads_flag_accepted(runner):
    r = run(runner, "--threads", "4", "parse", CORPUS / "crmini.qpcl")
    assert r.exit_code == 0
