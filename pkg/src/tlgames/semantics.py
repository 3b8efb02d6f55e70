"""Brute-force semantics of synchronization rules.

This is the reference against which the automata are checked.  It works
on explicit tokens and searches all assignments, so it is exponential by
design and guarded by a budget where enumeration is involved.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from .model import (END, INF, START, Action, Event, Problem, Rule, StateVariable,
                    Statement, Term, is_closed, timestamps,
                    validate_event_sequence)


class BudgetExceeded(RuntimeError):
    """An exhaustive search would exceed its configured size."""


class Token(NamedTuple):
    var: str
    value: str
    start_time: int
    end_time: int
    start_index: int  # 1-based event indices
    end_index: int

    def __str__(self):
        return f"{self.var}={self.value}[{self.start_time},{self.end_time}]"


def extract_tokens(seq: Sequence[Event]) -> list[Token]:
    """Tokens of a valid closed sequence, ordered by variable then start."""
    if not is_closed(seq):
        raise ValueError("tokens are only defined on closed sequences")
    times = timestamps(seq)
    opened: dict[str, tuple[str, int]] = {}
    out = []
    for i, ev in enumerate(seq, start=1):
        for a in sorted(ev.actions):
            if a.kind == END:
                value, si = opened.pop(a.var)
                out.append(Token(a.var, value, times[si - 1], times[i - 1], si, i))
        for a in ev.actions:
            if a.kind == START:
                opened[a.var] = (a.value, i)
    out.sort(key=lambda t: (t.var, t.start_time))
    return out


def _time(term: Term, assignment) -> int:
    tok = assignment[term.token]
    return tok.start_time if term.endpoint == START else tok.end_time


def atom_holds(atom, assignment) -> bool:
    diff = _time(atom.rhs, assignment) - _time(atom.lhs, assignment)
    return atom.lower <= diff and (atom.upper == INF or diff <= atom.upper)


def find_assignment(statement: Statement, tokens: Sequence[Token],
                    fixed: dict | None = None) -> dict | None:
    """Some assignment of the statement's quantifiers satisfying every atom.

    ``fixed`` pre-binds names (the trigger).  Assignments need not be
    injective and may reach into the past of the trigger.
    """
    fixed = dict(fixed or {})
    quants = statement.quantifiers
    candidates = [[t for t in tokens if t.var == q.var and t.value == q.value] for q in quants]
    # check each atom as soon as both of its tokens are bound
    order = list(fixed) + [q.token for q in quants]
    position = {name: k for k, name in enumerate(order)}
    ready: dict[int, list] = {}
    for atom in statement.atoms:
        k = max(position[atom.lhs.token], position[atom.rhs.token])
        ready.setdefault(k, []).append(atom)
    base = len(fixed)
    for k in range(base):
        for atom in ready.get(k, ()):
            if not atom_holds(atom, fixed):
                return None

    def search(i, binding):
        if i == len(quants):
            return dict(binding)
        name = quants[i].token
        for tok in candidates[i]:
            binding[name] = tok
            if all(atom_holds(a, binding) for a in ready.get(base + i, ())):
                found = search(i + 1, binding)
                if found is not None:
                    return found
            del binding[name]
        return None

    return search(0, fixed)


@dataclass
class RuleReport:
    satisfied: bool
    # one entry per trigger token (a single entry keyed None for goals)
    witnesses: list

    def first_failure(self):
        for trig, wit in self.witnesses:
            if wit is None:
                return trig
        return None


def check_rule(seq: Sequence[Event], rule: Rule, tokens=None) -> RuleReport:
    """Evaluate ``rule`` on a closed sequence.

    Each witness entry is ``(trigger_token, (statement_index, assignment))``
    or ``(trigger_token, None)`` when no statement can be satisfied.
    """
    if tokens is None:
        tokens = extract_tokens(seq)
    if rule.trigger is None:
        triggers = [None]
    else:
        triggers = [t for t in tokens
                    if t.var == rule.trigger.var and t.value == rule.trigger.value]
    witnesses = []
    ok = True
    for trig in triggers:
        fixed = {} if trig is None else {rule.trigger.token: trig}
        found = None
        for k, stmt in enumerate(rule.statements):
            a = find_assignment(stmt, tokens, fixed)
            if a is not None:
                found = (k, a)
                break
        witnesses.append((trig, found))
        ok = ok and found is not None
    return RuleReport(ok, witnesses)


def timeline_problems(variables: Iterable[StateVariable], tokens: Sequence[Token],
                      seq: Sequence[Event] | None = None) -> list[str]:
    """Violations of value transitions, durations, and timeline coverage."""
    out = []
    variables = list(variables)
    by_var: dict[str, list[Token]] = {}
    for t in tokens:
        by_var.setdefault(t.var, []).append(t)
    for x in variables:
        toks = by_var.get(x.name, [])
        if not toks:
            out.append(f"variable {x.name} has no token")
            continue
        for prev, nxt in zip(toks, toks[1:]):
            if nxt.value not in x.transitions[prev.value]:
                out.append(f"{x.name}: {prev.value} cannot be followed by {nxt.value}")
        for t in toks:
            lo, hi = x.durations[t.value]
            dur = t.end_time - t.start_time
            if dur < lo or (hi != INF and dur > hi):
                out.append(f"{x.name}: token {t} lasts {dur}, outside [{lo},{_fmt(hi)}]")
    declared = {x.name for x in variables}
    for name in by_var:
        if name not in declared:
            out.append(f"undeclared variable {name}")
    return out


def _fmt(u):
    return "inf" if u == INF else str(int(u))


class SolutionReport(NamedTuple):
    ok: bool
    reason: str | None  # None when ok
    invalid: bool = False  # the sequence is not a closed valid event sequence


def solution_report(problem: Problem, seq: Sequence[Event]) -> SolutionReport:
    bad = validate_event_sequence(seq, problem.variables)
    if bad is not None:
        return SolutionReport(False, str(bad), True)
    if not is_closed(seq):
        return SolutionReport(False, "the sequence is not closed", True)
    tokens = extract_tokens(seq)
    problems = timeline_problems(problem.variables, tokens)
    if problems:
        return SolutionReport(False, problems[0])
    for rule in problem.rules:
        rep = check_rule(seq, rule, tokens)
        if not rep.satisfied:
            trig = rep.first_failure()
            where = "" if trig is None else f" for trigger token {trig}"
            return SolutionReport(False, f"rule {rule.name} is not satisfied{where}")
    return SolutionReport(True, None)


def is_solution(problem: Problem, seq: Sequence[Event]) -> bool:
    return solution_report(problem, seq).ok


def rules_hold(rules: Iterable[Rule], seq: Sequence[Event], tokens=None) -> bool:
    """Every rule holds on a closed sequence (timelines are not checked)."""
    if tokens is None:
        tokens = extract_tokens(seq)
    return all(check_rule(seq, r, tokens).satisfied for r in rules)


# ---------------------------------------------------------------------------
# Enumeration

DEFAULT_BUDGET = 2_000_000


def count_closed_sequences(variables: Sequence[StateVariable], n_max: int,
                           delta_max: int) -> int:
    """Size of the search space of :func:`enumerate_closed_sequences`."""
    total = 0
    for first in _first_choices(variables):
        open_count = [len(x.values) for x, v in zip(variables, first) if v is not None]
        middle = 1
        for k in open_count:
            middle *= 1 + k
        for n in range(2, n_max + 1):
            total += middle ** (n - 2) * delta_max ** (n - 1)
    return total


def _first_choices(variables):
    options = [[None] + list(x.values) for x in variables]
    for combo in itertools.product(*options):
        if any(v is not None for v in combo):
            yield combo


def enumerate_closed_sequences(variables: Sequence[StateVariable], n_max: int,
                               delta_max: int, budget: int = DEFAULT_BUDGET
                               ) -> Iterator[tuple[Event, ...]]:
    """Every valid closed sequence with at most ``n_max`` events and delays
    at most ``delta_max``, each exactly once.

    Sequences without any action are skipped.  Value transitions and
    durations are not consulted: they are part of the solution check.
    """
    variables = list(variables)
    if n_max < 0 or delta_max < 1:
        raise ValueError("n_max must be >= 0 and delta_max >= 1")
    size = count_closed_sequences(variables, n_max, delta_max)
    if size > budget:
        raise BudgetExceeded(f"{size} sequences exceed the budget of {budget}")
    delays = range(1, delta_max + 1)
    for first in _first_choices(variables):
        opened = [(x, v) for x, v in zip(variables, first) if v is not None]
        e1 = Event(frozenset(Action(START, x.name, v) for x, v in opened), 0)
        # per open variable: keep going, or end and restart with some value
        per_var = [[None] + list(x.values) for x, _ in opened]
        middles = []
        for combo in itertools.product(*per_var):
            middles.append(combo)

        def extend(prefix, current, remaining):
            # close everything now
            final = frozenset(Action(END, x.name, v) for (x, _), v in zip(opened, current))
            for dl in delays:
                yield prefix + (Event(final, dl),)
            if remaining <= 1:
                return
            for combo in middles:
                acts = set()
                nxt = list(current)
                for k, ((x, _), restart) in enumerate(zip(opened, combo)):
                    if restart is not None:
                        acts.add(Action(END, x.name, current[k]))
                        acts.add(Action(START, x.name, restart))
                        nxt[k] = restart
                ev_actions = frozenset(acts)
                for dl in delays:
                    yield from extend(prefix + (Event(ev_actions, dl),), nxt, remaining - 1)

        if n_max >= 2:
            yield from extend((e1,), [v for _, v in opened], n_max - 1)
