import random

import pytest
from hypothesis import given, settings, strategies as st

from generators import random_game
from tlgames.model import END, INF, START, Game, Term
from tlgames.semantics import enumerate_closed_sequences, is_solution
from tlgames.syntax import (GOAL_VAR, SpecError, SpecSource, desugar_goals, desugar_plan,
                            format_game, load_game, parse_game, parse_or_raise, project_plan)

SATELLITE = "tests/fixtures/satellite.tg"


def errors(text):
    game, diags = parse_game(SpecSource(text, "t.tg"))
    assert game is None
    return diags


def test_satellite_rule_shapes():
    game = load_game(SATELLITE)
    comm, science, goal = game.system_rules
    [stmt] = comm.statements
    assert len(stmt.quantifiers) == 1 and len(stmt.atoms) == 2
    assert all((a.lower, a.upper) == (0, INF) for a in stmt.atoms)
    [stmt] = science.statements
    assert len(stmt.quantifiers) == 3 and len(stmt.atoms) == 3
    assert all((a.lower, a.upper) == (0, 0) for a in stmt.atoms)
    assert stmt.atoms[0].lhs == Term(END, "a") and stmt.atoms[0].rhs == Term(START, "b")
    assert goal.trigger is None and goal.name == "measure"


def test_satellite_variables():
    game = load_game(SATELLITE)
    xs, = game.controlled
    xg, = game.external
    assert xs.transitions["Science"] == {"Slewing"}
    assert xs.durations["Earth"] == (1, INF)
    assert xg.uncontrollable == {"Available", "Unavailable"}


def test_empty_spec_is_a_valid_game():
    game, diags = parse_game("")
    assert diags == [] and game == Game()


def test_comm2_single_diagnostic():
    with open("tests/fixtures/comm2.tg", encoding="utf-8") as fh:
        text = fh.read()
    diags = errors(text)
    assert len(diags) == 1
    d = diags[0]
    assert "Comm2" in d.message
    assert (d.line, d.column) == (2, 25)
    assert str(d).startswith("t.tg:2:25: error:")


def test_syntax_error_position():
    [d] = errors("controlled var x {\n  values p;\n  durations p [1, 2];\n}")
    assert d.line == 3 and d.column == 3
    assert "expected" in d.message


@pytest.mark.parametrize("text, fragment", [
    ("controlled var x { values p; }\ncontrolled var x { values q; }", "declared twice"),
    ("controlled var x { values; }", "expected value"),
    ("controlled var x { values p; duration p [3, 2]; }", "dmin 3 > dmax 2"),
    ("controlled var x { values p; duration p [0, 2]; }", "dmin >= 1"),
    ("controlled var x { values p; }\nsystem rule r: a[y = p] => true;", "undeclared variable y"),
    ("controlled var x { values p; }\nsystem rule r: a[x = p] => exists b[x = p] b[x = p];",
     "duplicate token name b"),
    ("controlled var x { values p; }\nsystem rule r: a[x = p] => exists . start(a) <= end(c);",
     "not quantified"),
    ("controlled var x { values p; }\nsystem rule r: a[x = p] => exists . start(a) <=[4, 2] end(a);",
     "l > u"),
])
def test_semantic_errors(text, fragment):
    diags = errors(text)
    assert any(fragment in d.message for d in diags), diags


def test_all_semantic_errors_are_reported():
    text = ("controlled var x { values p; duration q [1, 2]; }\n"
            "system rule r: a[x = z] => exists b[w = p];")
    assert len(errors(text)) == 3


def test_comments_and_and_operator():
    game = parse_or_raise("""
        // line comment
        controlled var x { values p, q; }  # another
        system rule r: a[x = p] => exists b[x = q] . end(a) = start(b) && end(b) <= end(b) | true;
    """)
    [rule] = game.system_rules
    assert len(rule.statements) == 2
    assert len(rule.statements[0].atoms) == 2


def test_false_body_and_final_values():
    game = parse_or_raise("controlled var x { values p, q; transitions q ->; }\n"
                          "domain rule never: a[x = p] => false;")
    assert game.domain_rules[0].statements == ()
    assert game.controlled[0].transitions["q"] == frozenset()


def test_load_game_raises_spec_error(tmp_path):
    path = tmp_path / "bad.tg"
    path.write_text("controlled var x {")
    with pytest.raises(SpecError) as info:
        load_game(path)
    assert str(path) in str(info.value)


@pytest.mark.parametrize("path", ["satellite", "relay", "blocked", "impossible_domain",
                                  "window42"])
def test_fixture_round_trip(path):
    game = load_game(f"tests/fixtures/{path}.tg")
    assert parse_or_raise(format_game(game)) == game


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_random_round_trip(rnd):
    game = random_game(rnd, max_rules=2)
    assert parse_or_raise(format_game(game)) == game
    sugared = desugar_goals(game)
    assert parse_or_raise(format_game(sugared)) == sugared


def test_desugar_identity_without_goals():
    game = load_game("tests/fixtures/relay.tg")
    assert desugar_goals(game) is game


def test_desugar_shares_one_fresh_variable():
    game = parse_or_raise("""
        controlled var x { values p, q; }
        goal g1: exists a[x = p];
        goal g2: exists a[x = q];
    """)
    sugared = desugar_goals(game)
    assert [x.name for x in sugared.controlled] == ["x", GOAL_VAR]
    assert {r.trigger.var for r in sugared.system_rules} == {GOAL_VAR}
    assert desugar_goals(sugared) == sugared


def test_desugar_avoids_name_clashes():
    game = parse_or_raise("""
        controlled var __goal { values p; }
        goal: exists __trigger[__goal = p];
    """)
    sugared = desugar_goals(game)
    fresh = sugared.controlled[-1].name
    assert fresh != "__goal" and fresh.endswith("__goal")
    assert sugared.system_rules[0].trigger.token != "__trigger"


def test_desugar_preserves_solutions():
    game = parse_or_raise("""
        controlled var x { values p, q; duration q [2, inf]; }
        controlled var y { values a; }
        goal g1: exists t[x = q] . start(t) <=[1, 3] end(t);
        goal g2: exists s[y = a] t[x = p] . end(t) <= start(s) | exists t[x = q];
    """)
    sugared = desugar_goals(game)
    orig, new = game.system_problem(), sugared.system_problem()
    solutions = set()
    for seq in enumerate_closed_sequences(game.variables, 4, 3):
        ok = is_solution(orig, seq)
        assert ok == is_solution(new, desugar_plan(game, seq))
        if ok:
            solutions.add(seq)
    projected = {project_plan(game, seq)
                 for seq in enumerate_closed_sequences(sugared.variables, 4, 3)
                 if is_solution(new, seq)}
    assert projected == solutions
    assert solutions


def test_random_game_specs_parse():
    rng = random.Random(5)
    for _ in range(30):
        game = random_game(rng)
        text = format_game(game)
        parsed, diags = parse_game(text)
        assert diags == [] and parsed == game
