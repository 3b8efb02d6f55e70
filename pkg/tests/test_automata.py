import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from generators import random_problem
from tlgames.automata import (SINK, AlphabetError, GameAutomaton, LiteralSyncAutomaton,
                              SyncAutomaton, TimelineAutomaton, automaton_dot, combine,
                              describe_game_state, encode, explore, problem_automaton)
from tlgames.dbm import alphabet_bound
from tlgames.model import (Atom, Event, Problem, Quantifier, Rule, StateVariable, Statement,
                           Term, end, start)
from tlgames.semantics import enumerate_closed_sequences, is_solution
from tlgames.syntax import parse_or_raise


def ev(actions, delay):
    return Event(frozenset(actions), delay)


def long_token_problem():
    """A ``p`` token must last at least 3; ``p`` itself only needs 2."""
    x = StateVariable.make("x", ["p", "q"], {"p": ["p", "q"], "q": ["q"]}, {"p": (2, float("inf"))})
    atom = Atom(Term("start", "a0"), Term("end", "a0"), 3, float("inf"))
    rule = Rule("r0", Quantifier("a0", "x", "p"), (Statement((), (atom,)),))
    return Problem((x,), (rule,))


SHORT_P = (ev([start("x", "p")], 0), ev([], 1), ev([end("x", "p")], 1))


def test_literal_variant_accepts_a_non_solution():
    problem = long_token_problem()
    d = alphabet_bound(problem.rules)
    assert not is_solution(problem, SHORT_P)
    assert not problem_automaton(problem, d).accepts(SHORT_P)
    literal = problem_automaton(problem, d, exact=False)
    assert literal.accepts(SHORT_P)
    assert literal.components[1].counters["delta_vanished"] > 0


def test_exact_automaton_accepts_long_token():
    problem = long_token_problem()
    d = alphabet_bound(problem.rules)
    seq = (ev([start("x", "p")], 0), ev([], 2), ev([end("x", "p")], 1))
    assert is_solution(problem, seq)
    assert problem_automaton(problem, d).accepts(seq)


def test_encode_first_delay_and_bound():
    seq = (ev([start("x", "p")], 0), ev([end("x", "p")], 3))
    assert encode(seq) == [(frozenset({start("x", "p")}), 1), (frozenset({end("x", "p")}), 3)]
    with pytest.raises(AlphabetError):
        encode(seq, 2)


def test_timeline_automaton_basics():
    x = StateVariable.make("x", ["p", "q"], {"p": ["q"], "q": []}, {"p": (1, 2)})
    tv = TimelineAutomaton([x], 3)
    q1 = tv.next(tv.initial, (frozenset({start("x", "p")}), 1))
    assert q1 == (("open", "p", 0),)
    # p must end within 2
    assert tv.next(q1, (frozenset(), 2)) == SINK
    q2 = tv.next(q1, (frozenset({end("x", "p"), start("x", "q")}), 2))
    assert q2 == (("open", "q", 0),)
    # q has no successor
    assert tv.next(q2, (frozenset({end("x", "q"), start("x", "p")}), 1)) == SINK
    done = tv.next(q2, (frozenset({end("x", "q")}), 3))
    assert tv.is_accepting(done)
    assert tv.next(done, (frozenset(), 1)) == SINK


def test_timeline_feasible_matches_next():
    x = StateVariable.make("x", ["p", "q"], {"p": ["q"], "q": ["p", "q"]}, {"p": (1, 2)})
    y = StateVariable.make("y", ["a"], durations={"a": (2, 3)})
    tv = TimelineAutomaton([x, y], 3)
    ex = explore(tv, tv.feasible, max_states=5000)
    actions = sorted({a for xv in (x, y) for v in xv.values
                      for a in (start(xv.name, v), end(xv.name, v))})
    for q in ex.states:
        feasible = set(tv.feasible(q))
        for r in range(len(actions) + 1):
            for combo in itertools.combinations(actions, r):
                # the first delay is always encoded as 1
                for delta in ((1,) if q == tv.initial else (1, 2, 3)):
                    sym = (frozenset(combo), delta)
                    assert (tv.next(q, sym) != SINK) == (sym in feasible)


def test_exploration_is_order_invariant():
    problem = random_problem(random.Random(3))
    d = alphabet_bound(problem.rules)
    counts = set()
    for order in ("bfs", "dfs"):
        for reverse in (False, True):
            dfa = problem_automaton(problem, d)
            tv = dfa.components[0]
            counts.add(len(explore(dfa, lambda q: tv.feasible(q[0]), 20000, order, reverse).states))
    assert len(counts) == 1


def test_combinators():
    problem = long_token_problem()
    d = alphabet_bound(problem.rules)
    a = problem_automaton(problem, d)
    tv = a.components[0]
    neg = combine("complement", [a])
    both = combine("intersection", [a, tv])
    either = combine("union", [neg, tv])
    for seq in enumerate_closed_sequences(problem.variables, 3, d):
        assert neg.accepts(seq) != a.accepts(seq)
        assert both.accepts(seq) == a.accepts(seq)
        assert either.accepts(seq)
    with pytest.raises(ValueError):
        combine("complement", [a, a])


def test_game_automaton_objective():
    game = parse_or_raise("""
        controlled var x { values p, q; }
        external var y { values a; }
        system rule s: t[x = q] => false;
        domain rule e: t[y = a] => exists u[x = p];
    """)
    dfa = GameAutomaton(game.variables, game.system_rules, game.domain_rules)
    only_q = (ev([start("x", "q"), start("y", "a")], 0), ev([end("x", "q"), end("y", "a")], 1))
    only_p = (ev([start("x", "p"), start("y", "a")], 0), ev([end("x", "p"), end("y", "a")], 1))
    # domain violated: success regardless of the system rules
    assert dfa.accepts(only_q)
    assert dfa.accepts(only_p)
    q = dfa.run(encode(only_q))
    assert not dfa.domain.is_accepting(q[1])
    assert not dfa.system.is_accepting(q[2])
    # a trigger with no possible witness is a definite domain failure
    never = GameAutomaton(game.variables, (), game.system_rules)
    assert never.domain_failed(never.run(encode(only_q)))


def test_dot_output():
    problem = long_token_problem()
    dfa = problem_automaton(problem, alphabet_bound(problem.rules))
    tv = dfa.components[0]
    ex = explore(dfa, lambda q: tv.feasible(q[0]), 1000)
    text = automaton_dot(dfa, ex)
    assert text.startswith("digraph automaton {")
    assert text.count("->") == len(ex.edges) + 1


def test_describe_game_state():
    game = parse_or_raise("controlled var x { values p; }")
    dfa = GameAutomaton(game.variables, (), ())
    assert describe_game_state(dfa.initial).startswith("-")


def test_rule_automata_reject_goals():
    goal = Rule("g", None, (Statement((), ()),))
    with pytest.raises(ValueError):
        SyncAutomaton([], [goal], 1)
    with pytest.raises(ValueError):
        LiteralSyncAutomaton([], [goal], 1)


@settings(max_examples=15, deadline=None)
@given(st.randoms(use_true_random=False))
def test_exact_automaton_matches_oracle(rnd):
    problem = random_problem(rnd)
    d = alphabet_bound(problem.rules)
    dfa = problem_automaton(problem, d)
    for seq in itertools.islice(enumerate_closed_sequences(problem.variables, 3, min(d, 3)), 400):
        assert dfa.accepts(seq) == is_solution(problem, seq)
