import io
import json
import subprocess
import sys

import pytest

from tlgames.cli import (EXIT_BUDGET, EXIT_ERROR, EXIT_EVE_WINS, EXIT_INVALID_PLAN, EXIT_OK,
                         run_cli)

FIX = "tests/fixtures"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def verdict(stdout):
    return json.loads(stdout.strip().splitlines()[-1])


def test_check_ok():
    code, out, _ = run("check", f"{FIX}/satellite.tg")
    assert code == EXIT_OK
    data = verdict(out)
    assert data["ok"] and data["controlled"] == ["xs"] and data["external"] == ["xg"]


def test_check_reports_diagnostics():
    code, out, err = run("check", f"{FIX}/comm2.tg")
    assert code == EXIT_ERROR
    assert out == ""
    assert err.strip() == f"{FIX}/comm2.tg:2:25: error: undeclared value Comm2 of variable xs"


@pytest.mark.parametrize("plan, expected", [("satellite_ok", EXIT_OK),
                                            ("satellite_bad", EXIT_ERROR),
                                            ("satellite_invalid", EXIT_INVALID_PLAN)])
def test_validate_and_accepts_agree_on_fixture_plans(plan, expected):
    for cmd in ("validate", "accepts"):
        code, out, _ = run(cmd, f"{FIX}/satellite.tg", f"{FIX}/{plan}.json")
        assert code == expected, cmd
        assert verdict(out)["invalid"] is (expected == EXIT_INVALID_PLAN)


def test_validate_and_accepts_agree_on_every_rule_set(tmp_path):
    for plan in ("satellite_ok", "satellite_bad"):
        for rules in ("system", "domain", "game"):
            codes = {run(cmd, f"{FIX}/satellite.tg", f"{FIX}/{plan}.json", "--rules", rules)[0]
                     for cmd in ("validate", "accepts")}
            assert len(codes) == 1, (plan, rules)


def test_malformed_plan(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"events": [{"delay": "x"}]}')
    code, _, err = run("validate", f"{FIX}/satellite.tg", bad)
    assert code == EXIT_INVALID_PLAN
    assert "malformed" in err


def test_synth_outcomes(tmp_path):
    path = tmp_path / "relay.json"
    code, out, _ = run("synth", f"{FIX}/relay.tg", "-o", path)
    assert code == EXIT_OK
    data = verdict(out)
    assert data["charlie_wins"] and data["d"] == 3
    strategy = json.loads(path.read_text())
    assert strategy["format_version"] == 1 and strategy["strategy"]
    code, out, _ = run("synth", f"{FIX}/blocked.tg")
    assert code == EXIT_EVE_WINS and verdict(out)["charlie_wins"] is False
    code, out, err = run("synth", f"{FIX}/window42.tg", "--max-states", 500)
    assert code == EXIT_BUDGET
    assert verdict(out)["budget_exceeded"] is True
    assert "budget exceeded" in err


def test_synth_time_budget():
    code, out, _ = run("synth", f"{FIX}/window42.tg", "--max-seconds", "0.2",
                       "--max-states", 10_000_000)
    assert code == EXIT_BUDGET
    assert verdict(out)["budget_exceeded"] is True


def test_synth_to_stdout():
    code, out, err = run("synth", f"{FIX}/relay.tg", "-o", "-")
    assert code == EXIT_OK
    assert json.loads(out)["metadata"]["d"] == 3
    assert json.loads(err)["charlie_wins"]


def test_synth_output_is_byte_identical(tmp_path):
    texts = []
    for i in range(2):
        path = tmp_path / f"s{i}.json"
        run("synth", f"{FIX}/satellite.tg", "-o", path)
        texts.append(path.read_bytes())
    assert texts[0] == texts[1]


@pytest.fixture(scope="module")
def strategies(tmp_path_factory):
    base = tmp_path_factory.mktemp("strategies")
    paths = {}
    for name in ("relay", "satellite"):
        paths[name] = base / f"{name}.json"
        assert run("synth", f"{FIX}/{name}.tg", "-o", paths[name])[0] == EXIT_OK
    return paths


def test_simulate_with_seed_gives_valid_plan(strategies, tmp_path):
    transcript = tmp_path / "t.json"
    code, out, _ = run("simulate", f"{FIX}/satellite.tg", strategies["satellite"],
                       "--seed", 2, "--horizon", 200, "--transcript", transcript)
    assert code == EXIT_OK
    assert verdict(out)["verdict"] == "success"
    data = json.loads(transcript.read_text())
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps(data["plan"]))
    assert run("validate", f"{FIX}/satellite.tg", plan)[0] == EXIT_OK
    assert run("accepts", f"{FIX}/satellite.tg", plan)[0] == EXIT_OK


def test_simulate_script_replays(strategies, tmp_path):
    transcript = tmp_path / "t.json"
    run("simulate", f"{FIX}/relay.tg", strategies["relay"], "--seed", 5, "--horizon", 200,
        "--transcript", transcript)
    data = json.loads(transcript.read_text())
    script = tmp_path / "script.json"
    script.write_text(json.dumps([p["eve"] for p in data["moves"]]))
    again = tmp_path / "again.json"
    code, out, _ = run("simulate", f"{FIX}/relay.tg", strategies["relay"], "--script", script,
                       "--horizon", 200, "--transcript", again)
    assert code == EXIT_OK
    assert json.loads(again.read_text()) == data
    script.write_text(json.dumps(["jump(1)"]))
    assert run("simulate", f"{FIX}/relay.tg", strategies["relay"], "--script", script)[0] \
        == EXIT_ERROR


def test_simulate_interactive(strategies, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO("?\n" + "0\n" * 300))
    code, out, _ = run("simulate", f"{FIX}/relay.tg", strategies["relay"], "--interactive",
                       "--horizon", 200)
    assert code == EXIT_OK
    assert "eve> " in out
    # answers are not echoed, so the verdict follows the last prompt
    assert verdict(out.split("eve> ")[-1])["verdict"] == "success"


def test_simulate_rejects_conflicting_policies(strategies):
    code, _, err = run("simulate", f"{FIX}/relay.tg", strategies["relay"], "--seed", 1,
                       "--interactive")
    assert code == EXIT_ERROR and "at most one" in err


@pytest.mark.parametrize("what", ["automaton", "arena"])
@pytest.mark.parametrize("fmt", ["dot", "json"])
def test_export(what, fmt, tmp_path):
    path = tmp_path / f"out.{fmt}"
    code, _, _ = run("export", f"{FIX}/relay.tg", "--what", what, "--format", fmt, "-o", path)
    assert code == EXIT_OK
    text = path.read_text()
    if fmt == "dot":
        assert text.startswith("digraph")
    else:
        data = json.loads(text)
        assert data["format_version"] == 1 and data["states"]
    # exports are deterministic
    _, again, _ = run("export", f"{FIX}/relay.tg", "--what", what, "--format", fmt)
    assert again == text


def test_stats():
    code, out, _ = run("stats", f"{FIX}/relay.tg")
    assert code == EXIT_OK
    data = verdict(out)
    assert data["d"] == 3 and data["arena_states"] == 137 and data["charlie_wins"]
    assert data["window_system"] == 2


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["check"], ["synth", "x.tg", "--d", "0"],
                                  ["check", "does/not/exist.tg"]])
def test_usage_errors(argv):
    assert run(*argv)[0] == EXIT_ERROR


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tlgames.cli", "check", f"{FIX}/relay.tg"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["ok"]
