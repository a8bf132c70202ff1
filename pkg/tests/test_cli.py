"""Command-line interface tests via click's test runner."""

import json

import pytest
from click.testing import CliRunner

from sepstore.cli import main
from sepstore.grammar import parse
from sepstore.logic import make_node, serialize_script
from sepstore.syntax import Skip, Triple


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, list(args))


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def json_lines(output):
    return [json.loads(line) for line in output.splitlines() if line]


# ---------------------------------------------------------------------------
# parse / normalize


def test_cli_parse(runner, tmp_path):
    p = write(tmp_path, "p.prog", "skip ; [1] := 2")
    r = invoke(runner, "parse", p)
    assert r.exit_code == 0
    assert r.output.strip() == "skip ; [1] := 2"
    a = write(tmp_path, "a.asn", "emp /\\ true")
    r = invoke(runner, "parse", a, "--kind", "assertion")
    assert r.exit_code == 0 and "/\\" in r.output


def test_cli_parse_error_is_usage(runner, tmp_path):
    p = write(tmp_path, "bad.prog", "let x = in skip")
    r = invoke(runner, "parse", p)
    assert r.exit_code == 3


def test_cli_normalize(runner, tmp_path):
    a = write(tmp_path, "a.asn", "({emp} 'skip' {emp}) (*) 1 |-> 0")
    r = invoke(runner, "normalize", a)
    assert r.exit_code == 0
    assert r.output.strip() \
        == "{emp * 1 |-> 0} 'skip' {emp * 1 |-> 0}"


# ---------------------------------------------------------------------------
# run


def test_cli_run_done(runner, tmp_path):
    p = write(tmp_path, "p.prog", "[1] := 7")
    h = write(tmp_path, "h.heap", "1 = 0")
    r = invoke(runner, "run", p, h)
    assert r.exit_code == 0 and "1 = 7" in r.output


def test_cli_run_fault(runner, tmp_path):
    p = write(tmp_path, "p.prog", "free(9)")
    r = invoke(runner, "run", p)
    assert r.exit_code == 1 and "FAULT" in r.output


def test_cli_run_out_of_fuel(runner, tmp_path):
    p = write(tmp_path, "p.prog", "eval [1]")
    h = write(tmp_path, "h.heap", "1 = 'eval [1]'")
    r = invoke(runner, "run", p, h, "--fuel", "40")
    assert r.exit_code == 2 and "OUT-OF-FUEL" in r.output


def test_cli_run_json(runner, tmp_path):
    p = write(tmp_path, "p.prog", "skip")
    r = invoke(runner, "run", p, "--json")
    assert r.exit_code == 0
    line = json_lines(r.output)[0]
    assert line["kind"] == "run" and line["verdict"] == "done"


# ---------------------------------------------------------------------------
# check


def test_cli_check_ok(runner, tmp_path):
    node = make_node("Skip", [], parse("{emp} 'skip' {emp}", "assertion"))
    path = write(tmp_path, "ok.proof", serialize_script(node))
    r = invoke(runner, "check", path)
    assert r.exit_code == 0
    r = invoke(runner, "check", path, "--json")
    line = json_lines(r.output)[0]
    assert line["verdict"] == "ok" and line["rules"] == {"Skip": 1}


def test_cli_check_rejected(runner, tmp_path):
    node = make_node("Skip", [], parse("{emp} 'skip' {true}", "assertion"))
    path = write(tmp_path, "bad.proof", serialize_script(node))
    r = invoke(runner, "check", path)
    assert r.exit_code == 1


def test_cli_check_script_error(runner, tmp_path):
    path = write(tmp_path, "broken.proof", "(rule Skip")
    r = invoke(runner, "check", path)
    assert r.exit_code == 3


# ---------------------------------------------------------------------------
# test


FAST_CFG = "addrs = 1, 2\nints = 0, 1\ncode = skip\ntag_max = 2\nk = 2\n"


def test_cli_test_triple_pass(runner, tmp_path):
    g = write(tmp_path, "g.asn", "{1 |-> _} '[1] := 0' {1 |-> 0}")
    c = write(tmp_path, "cfg", FAST_CFG)
    r = invoke(runner, "test", g, "--config", c, "--json")
    assert r.exit_code == 0
    line = json_lines(r.output)[0]
    assert line["verdict"] == "pass" and line["samples"] > 0


def test_cli_test_triple_fail_with_witness(runner, tmp_path):
    g = write(tmp_path, "g.asn", "{true} 'skip' {false}")
    c = write(tmp_path, "cfg", FAST_CFG)
    r = invoke(runner, "test", g, "--config", c, "--json")
    assert r.exit_code == 1
    line = json_lines(r.output)[0]
    assert line["verdict"] == "fail" and "witness" in line


def test_cli_test_entailment(runner, tmp_path):
    c = write(tmp_path, "cfg", FAST_CFG)
    g = write(tmp_path, "g.asn", "1 |-> 0 => exists v. 1 |-> v")
    assert invoke(runner, "test", g, "--config", c).exit_code == 0
    g2 = write(tmp_path, "g2.asn", "true => false")
    assert invoke(runner, "test", g2, "--config", c).exit_code == 1


def test_cli_test_rejects_other_goals(runner, tmp_path):
    g = write(tmp_path, "g.asn", "emp")
    assert invoke(runner, "test", g).exit_code == 3


def test_cli_bad_config(runner, tmp_path):
    c = write(tmp_path, "cfg", "nonsense = 1")
    g = write(tmp_path, "g.asn", "true => true")
    assert invoke(runner, "test", g, "--config", c).exit_code == 3


# ---------------------------------------------------------------------------
# counterexamples


def test_cli_counterexamples(runner, tmp_path):
    c = write(tmp_path, "cfg", FAST_CFG + "frames = emp ;; true\n")
    r = invoke(runner, "counterexamples", "--config", c, "--json")
    assert r.exit_code == 0, r.output
    lines = json_lines(r.output)
    assert len(lines) >= 6
    assert all(l["verdict"] == "as-registered" for l in lines)
    names = {l["goal"] for l in lines}
    assert "deep-frame/program-faults" in names
    assert "true-skip-false/refuted" in names
    assert "in-rule/script-rejected" in names
    assert "invariance/entailment-refuted" in names
    assert "update-inv/code-copy-refuted" in names


def test_cli_counterexamples_unsound_demo(runner, tmp_path):
    c = write(tmp_path, "cfg", FAST_CFG)
    r = invoke(runner, "counterexamples", "--config", c, "--json",
               "--accept-unsound-in")
    # demonstrating the unsoundness end to end is itself exit 1
    assert r.exit_code == 1
    lines = json_lines(r.output)
    assert any(l["goal"] == "in-rule/unsoundness-demonstrated"
               and l["verdict"] == "unsound" for l in lines)
