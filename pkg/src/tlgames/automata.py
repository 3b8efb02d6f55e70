"""Deterministic automata over events.

Symbols are pairs ``(actions, delay)`` with ``actions`` a frozenset of
:class:`~tlgames.model.Action` and ``1 <= delay <= d``.  Every automaton is
complete and lazily explored: successors are computed on demand and
memoized, so the transition table is never built up front.

Provided here:

* :class:`SyncAutomaton` accepts sequences satisfying a set of triggered
  rules (the ``exact`` construction used everywhere by default);
* :class:`LiteralSyncAutomaton` is the literal ``<Υ, Δ, Φ>`` update kept for
  comparison; it is known to accept some non-solutions;
* :class:`TimelineAutomaton` checks value transitions and durations;
* :class:`Product` and :class:`Complement` form the generic algebra, and
  :class:`GameAutomaton` is the flat product used for games.
"""
from __future__ import annotations

import itertools
from collections import Counter, deque
from typing import Callable, NamedTuple, Sequence

from .dbm import (MatchingStructure, alphabet_bound, compile_statement, durations_of,
                  saturate, step, window)
from .model import END, INF, START, Action, Event, Problem, Rule, StateVariable

SINK = "⊥"


class AlphabetError(ValueError):
    pass


class Alphabet(NamedTuple):
    actions: frozenset
    d: int


def encode(seq: Sequence[Event], d: int | None = None) -> list[tuple[frozenset, int]]:
    """Symbols read for ``seq``: the first delay is encoded as 1."""
    out = []
    for k, ev in enumerate(seq):
        delay = 1 if k == 0 else ev.delay
        if d is not None and delay > d:
            raise AlphabetError(f"delay {delay} at event {k + 1} exceeds d={d}; normalize gaps first")
        out.append((ev.actions, delay))
    return out


class Dfa:
    """Lazily explored complete DFA with a memoized transition function."""

    alphabet: Alphabet
    initial: object

    def __init__(self):
        self._cache: dict = {}

    def next(self, state, symbol):
        key = (state, symbol)
        try:
            return self._cache[key]
        except KeyError:
            pass
        # insert-if-absent: a concurrent writer would compute the same value
        return self._cache.setdefault(key, self._compute(state, symbol))

    def _compute(self, state, symbol):
        raise NotImplementedError

    def is_accepting(self, state) -> bool:
        raise NotImplementedError

    def is_sink(self, state) -> bool:
        """True only if ``state`` is known to reject every extension."""
        return False

    def run(self, symbols, state=None):
        state = self.initial if state is None else state
        for sym in symbols:
            state = self.next(state, sym)
        return state

    def accepts(self, seq: Sequence[Event]) -> bool:
        return self.is_accepting(self.run(encode(seq, self.alphabet.d)))

    def cache_size(self) -> int:
        return len(self._cache)

    def clear_cache(self):
        self._cache.clear()


def accepts(dfa: Dfa, seq: Sequence[Event]) -> bool:
    return dfa.accepts(seq)


# ---------------------------------------------------------------------------
# Rule automata


def _rule_table(rules: Sequence[Rule]):
    for r in rules:
        if r.trigger is None:
            raise ValueError(f"rule {r.name} has no trigger; desugar goals first")
    return list(rules)


class _RuleBase(Dfa):
    def __init__(self, variables: Sequence[StateVariable], rules: Sequence[Rule],
                 d: int | None = None, W: int | None = None):
        super().__init__()
        self.variables = tuple(variables)
        self.rules = _rule_table(rules)
        self.d = alphabet_bound(self.rules) if d is None else d
        self.W = window(self.rules) if W is None else W
        if self.W < 1:
            raise ValueError("window must be positive")
        self.alphabet = Alphabet(_actions(self.variables), self.d)
        durs = durations_of(self.variables)
        self.initial_structures = []
        self.rule_statements = []
        for ri, rule in enumerate(self.rules):
            ids = []
            for si, stmt in enumerate(rule.statements):
                ids.append(len(self.initial_structures))
                self.initial_structures.append(compile_statement(rule, stmt, durs, key=(ri, si)))
            self.rule_statements.append(ids)
        self.triggers = [Action(START, r.trigger.var, r.trigger.value) for r in self.rules]
        self._step_cache: dict = {}

    def step_one(self, m: MatchingStructure, actions, delta) -> tuple:
        key = (m, actions, delta)
        out = self._step_cache.get(key)
        if out is None:
            out = tuple(saturate(s, self.W) for s in step(m, actions, delta))
            out = self._step_cache.setdefault(key, out)
        return out

    def step_set(self, structures, actions, delta) -> set:
        out = set()
        for m in structures:
            out.update(self.step_one(m, actions, delta))
        return out

    def is_sink(self, state) -> bool:
        return state == SINK

    def _groups(self, upsilon):
        free, groups = [], {}
        for m in upsilon:
            if m.active:
                groups.setdefault((m.shape.key[0], m.age), []).append(m)
            else:
                free.append(m)
        return free, groups

    def _captured(self, upsilon_next, actions) -> bool:
        """Every rule triggered in ``actions`` has a fresh active structure."""
        for ri, trig in enumerate(self.triggers):
            if trig in actions and not any(
                    m.shape.key[0] == ri and m.age == 0 and m.M & 1 for m in upsilon_next):
                return False
        return True


class SyncState(NamedTuple):
    upsilon: frozenset  # matching structures younger than the window
    pending: frozenset  # frozensets of structures, one per older obligation

    def sort_key(self):
        return (sorted(m.sort_key() for m in self.upsilon),
                sorted(sorted(m.sort_key() for m in g) for g in self.pending))


class SyncAutomaton(_RuleBase):
    """Accepts the closed sequences satisfying every rule.

    Structures in ``upsilon`` are either inactive (nothing committed about a
    trigger) or active, grouped by rule and age: one group per trigger
    token, holding every way its statements can still be matched.  A group
    dies with the whole automaton when no alternative survives, and is
    dropped once one alternative closes.  Groups whose age reaches the window
    move to ``pending``; identical groups merge there, which is harmless
    since they evolve identically.
    """

    def __init__(self, variables, rules, d=None, W=None):
        super().__init__(variables, rules, d, W)
        self.initial = SyncState(frozenset(self.initial_structures), frozenset())

    def is_accepting(self, state) -> bool:
        return (state != SINK and not state.pending
                and not any(m.active for m in state.upsilon))

    def _compute(self, state, symbol):
        if state == SINK:
            return SINK
        actions, delta = symbol
        free, groups = self._groups(state.upsilon)
        upsilon = self.step_set(free, actions, delta)
        pending = set()
        for (_, t), group in groups.items():
            nxt = self.step_set(group, actions, delta)
            if not nxt:
                return SINK
            if any(m.closed for m in nxt):
                continue
            if t + delta < self.W:
                upsilon.update(nxt)
            else:
                pending.add(frozenset(nxt))
        for group in state.pending:
            nxt = self.step_set(group, actions, delta)
            if not nxt:
                return SINK
            if not any(m.closed for m in nxt):
                pending.add(frozenset(nxt))
        if not self._captured(upsilon, actions):
            return SINK
        return SyncState(frozenset(upsilon), frozenset(pending))


class LiteralState(NamedTuple):
    upsilon: frozenset
    delta: tuple  # per statement id: frozenset of structures
    phi: tuple  # per statement id: frozenset of statement ids

    def sort_key(self):
        return (sorted(m.sort_key() for m in self.upsilon),
                [sorted(m.sort_key() for m in s) for s in self.delta],
                [sorted(s) for s in self.phi])


class LiteralSyncAutomaton(_RuleBase):
    """The ``<Υ, Δ, Φ>`` update applied literally.

    ``Ψ(E')`` in the ``Φ'`` update is read as the ``Ψ^R_t`` of the
    promotion that filled ``Δ'(E')``.  ``counters`` records how often a
    promotion overwrote live ``Δ`` content, several groups were promoted at
    once, or a nonempty ``Δ`` set vanished without failing the run.
    """

    def __init__(self, variables, rules, d=None, W=None):
        super().__init__(variables, rules, d, W)
        n = len(self.initial_structures)
        self.statement_rule = [m.shape.key[0] for m in self.initial_structures]
        self.siblings = [frozenset(self.rule_statements[r]) for r in self.statement_rule]
        self.initial = LiteralState(frozenset(self.initial_structures),
                                  tuple(frozenset() for _ in range(n)),
                                  tuple(self.siblings))
        self.counters = Counter()

    def is_accepting(self, state) -> bool:
        return (state != SINK and not any(m.active for m in state.upsilon)
                and not any(state.delta))

    def _compute(self, state, symbol):
        if state == SINK:
            return SINK
        actions, delta = symbol
        W = self.W
        free, groups = self._groups(state.upsilon)
        upsilon = self.step_set(free, actions, delta)
        promoted = {}  # rule -> list of (t, {statement id: structures}, psi)
        for (ri, t), group in sorted(groups.items(), key=lambda kv: kv[0]):
            nxt = self.step_set(group, actions, delta)
            if not nxt:
                return SINK
            if t < W - delta:
                if not any(m.closed for m in nxt):
                    upsilon.update(nxt)
                continue
            by_stmt = {}
            for m in nxt:
                by_stmt.setdefault(self.rule_statements[ri][m.shape.key[1]], set()).add(m)
            promoted.setdefault(ri, []).append((t, by_stmt, frozenset(by_stmt)))
        if sum(len(v) for v in promoted.values()) > 1:
            self.counters["multi_promotion"] += 1
        n = len(self.initial_structures)
        delta1, psi_of = [], []
        for e in range(n):
            chosen = None
            for t, by_stmt, psi in promoted.get(self.statement_rule[e], ()):
                if e in by_stmt:
                    chosen = (by_stmt[e], psi)
                    break
            stepped = self.step_set(state.delta[e], actions, delta)
            if chosen is not None:
                if stepped:
                    self.counters["delta_overwrite"] += 1
                delta1.append(frozenset(chosen[0]))
                psi_of.append(chosen[1])
            else:
                if state.delta[e] and not stepped:
                    self.counters["delta_vanished"] += 1
                delta1.append(frozenset(stepped))
                psi_of.append(frozenset())
        closed = [any(m.closed for m in s) for s in delta1]
        phi1 = []
        for e in range(n):
            if any(closed[f] and e in psi_of[f] for f in range(n)):
                phi1.append(self.siblings[e])
                continue
            drop = set()
            for t, by_stmt, psi in promoted.get(self.statement_rule[e], ()):
                if e not in psi:
                    drop |= psi
            phi1.append(state.phi[e] - drop)
        delta2 = tuple(
            frozenset() if any(closed[f] and e in phi1[f] for f in range(n)) else delta1[e]
            for e in range(n))
        if not self._captured(upsilon, actions):
            return SINK
        return LiteralState(frozenset(upsilon), delta2, tuple(phi1))


# ---------------------------------------------------------------------------
# Timelines

IDLE = None


class TimelineAutomaton(Dfa):
    """Checks value transitions, durations, and that every variable has a
    timeline.

    A state holds one entry per variable: ``None`` before the first event,
    ``("open", value, elapsed)`` or ``("done", value)``.  ``elapsed``
    saturates at ``dmin`` for unbounded values; a token that reaches its
    ``dmax`` without ending sends the run to the sink immediately.
    """

    def __init__(self, variables: Sequence[StateVariable], d: int):
        super().__init__()
        self.variables = tuple(variables)
        self.index = {x.name: i for i, x in enumerate(self.variables)}
        self.alphabet = Alphabet(_actions(self.variables), d)
        self.initial = tuple(IDLE for _ in self.variables)

    def is_sink(self, state) -> bool:
        return state == SINK

    def is_accepting(self, state) -> bool:
        if state == SINK:
            return False
        return all(s is not IDLE and s[0] == "done" for s in state)

    def _compute(self, state, symbol):
        if state == SINK:
            return SINK
        actions, delta = symbol
        n = len(self.variables)
        starts, ends = {}, {}
        for a in actions:
            i = self.index.get(a.var)
            bucket = starts if a.kind == START else ends
            if i is None or i in bucket:
                return SINK
            bucket[i] = a.value
        if n == 0:
            return SINK
        if state[0] is IDLE:
            if ends or len(starts) != n:
                return SINK
            return tuple(("open", starts[i], 0) for i in range(n))
        if state[0][0] == "done":
            return SINK
        out = []
        for i, (x, (_, value, elapsed)) in enumerate(zip(self.variables, state)):
            lo, hi = x.durations[value]
            e = elapsed + delta
            if i in ends:
                if ends[i] != value or e < lo or (hi != INF and e > hi):
                    return SINK
                if i in starts:
                    if starts[i] not in x.transitions[value]:
                        return SINK
                    out.append(("open", starts[i], 0))
                else:
                    out.append(("done", value))
            else:
                if i in starts or (hi != INF and e >= hi):
                    return SINK
                out.append(("open", value, min(e, lo) if hi == INF else e))
        if len({s[0] for s in out}) > 1:
            return SINK
        return tuple(out)

    def feasible(self, state, d: int | None = None) -> list[tuple[frozenset, int]]:
        """Every symbol leading from ``state`` to a non-sink state."""
        d = self.alphabet.d if d is None else d
        if state == SINK or not self.variables:
            return []
        if state[0] is IDLE:
            return [(frozenset(Action(START, x.name, v) for x, v in zip(self.variables, combo)), 1)
                    for combo in itertools.product(*(x.values for x in self.variables))]
        if state[0][0] == "done":
            return []
        out = []
        for delta in range(1, d + 1):
            options = []
            final = []
            for x, (_, value, elapsed) in zip(self.variables, state):
                lo, hi = x.durations[value]
                e = elapsed + delta
                opts = []
                if hi == INF or e < hi:
                    opts.append(())
                can_end = e >= lo and (hi == INF or e <= hi)
                if can_end:
                    for w in sorted(x.transitions[value]):
                        opts.append((Action(END, x.name, value), Action(START, x.name, w)))
                    final.append(Action(END, x.name, value))
                options.append(opts)
            for combo in itertools.product(*options):
                out.append((frozenset(a for part in combo for a in part), delta))
            if len(final) == len(self.variables):
                out.append((frozenset(final), delta))
        return out


# ---------------------------------------------------------------------------
# Algebra


def _check_alphabets(args):
    first = args[0].alphabet
    for a in args[1:]:
        if a.alphabet != first:
            raise AlphabetError(f"alphabet mismatch: {a.alphabet} vs {first}")
    return first


class Product(Dfa):
    """Synchronous product accepting by conjunction or disjunction."""

    def __init__(self, components: Sequence[Dfa], mode: str = "and"):
        super().__init__()
        if mode not in ("and", "or"):
            raise ValueError(mode)
        self.components = tuple(components)
        self.mode = mode
        self.alphabet = _check_alphabets(self.components)
        self.initial = tuple(c.initial for c in self.components)

    def _compute(self, state, symbol):
        return tuple(c.next(s, symbol) for c, s in zip(self.components, state))

    def is_accepting(self, state) -> bool:
        flags = (c.is_accepting(s) for c, s in zip(self.components, state))
        return all(flags) if self.mode == "and" else any(flags)

    def is_sink(self, state) -> bool:
        sinks = [c.is_sink(s) for c, s in zip(self.components, state)]
        return any(sinks) if self.mode == "and" else all(sinks)


class Complement(Dfa):
    def __init__(self, inner: Dfa):
        super().__init__()
        self.inner = inner
        self.alphabet = inner.alphabet
        self.initial = inner.initial

    def _compute(self, state, symbol):
        return self.inner.next(state, symbol)

    def is_accepting(self, state) -> bool:
        return not self.inner.is_accepting(state)


def combine(op: str, args: Sequence[Dfa]) -> Dfa:
    """``op`` is one of ``intersection``, ``union``, ``complement``."""
    if op == "complement":
        if len(args) != 1:
            raise ValueError("complement takes one automaton")
        return Complement(args[0])
    if op in ("intersection", "product-intersection"):
        return Product(args, "and")
    if op in ("union", "product-union"):
        return Product(args, "or")
    raise ValueError(f"unknown operation {op!r}")


def problem_automaton(problem: Problem, d: int | None = None, exact: bool = True):
    """``TV ∩ S`` for a planning problem (goals must already be desugared)."""
    d = alphabet_bound(problem.rules) if d is None else d
    cls = SyncAutomaton if exact else LiteralSyncAutomaton
    return Product([TimelineAutomaton(problem.variables, d),
                    cls(problem.variables, problem.rules, d)], "and")


class GameAutomaton(Dfa):
    """Flat product ``(timelines, domain rules, system rules)``.

    Accepts when the timelines are complete and either the domain rules
    fail or the system rules hold.  The timeline component is shared so
    that open prefixes are never accepted merely by failing the domain.
    """

    def __init__(self, variables, system_rules, domain_rules, d: int | None = None,
                 exact: bool = True):
        super().__init__()
        self.d = alphabet_bound(list(system_rules) + list(domain_rules)) if d is None else d
        cls = SyncAutomaton if exact else LiteralSyncAutomaton
        self.tv = TimelineAutomaton(variables, self.d)
        self.domain = cls(variables, domain_rules, self.d)
        self.system = cls(variables, system_rules, self.d)
        self.alphabet = self.tv.alphabet
        self.initial = (self.tv.initial, self.domain.initial, self.system.initial)

    def _compute(self, state, symbol):
        tv, dom, sys_ = state
        return (self.tv.next(tv, symbol), self.domain.next(dom, symbol),
                self.system.next(sys_, symbol))

    def is_accepting(self, state) -> bool:
        tv, dom, sys_ = state
        return self.tv.is_accepting(tv) and (
            not self.domain.is_accepting(dom) or self.system.is_accepting(sys_))

    def is_sink(self, state) -> bool:
        return state[0] == SINK

    def domain_failed(self, state) -> bool:
        return state[1] == SINK

    def feasible(self, state):
        return self.tv.feasible(state[0])


def _actions(variables) -> frozenset:
    return frozenset(Action(kind, x.name, v)
                     for x in variables for v in x.values for kind in (START, END))


# ---------------------------------------------------------------------------
# Exploration


class Exploration(NamedTuple):
    states: list
    edges: list  # (source index, symbol, target index)
    depth: dict  # state -> least number of symbols read to reach it


def explore(dfa: Dfa, symbols: Callable, max_states: int = 100_000,
            order: str = "bfs", reverse: bool = False, max_depth: int | None = None
            ) -> Exploration:
    """Reachable fragment of ``dfa`` following ``symbols(state)``.

    ``order`` is ``bfs`` or ``dfs`` and ``reverse`` flips the symbol order;
    the reachable set does not depend on either.  With ``max_depth`` only
    states within that many symbols are kept.
    """
    from .semantics import BudgetExceeded

    depth = {dfa.initial: 0}
    index = {dfa.initial: 0}
    states = [dfa.initial]
    edges = []
    frontier = deque([dfa.initial])
    while frontier:
        q = frontier.popleft() if order == "bfs" else frontier.pop()
        dq = depth[q]
        if max_depth is not None and dq >= max_depth:
            continue
        syms = list(symbols(q))
        if reverse:
            syms.reverse()
        for sym in syms:
            r = dfa.next(q, sym)
            if r not in index:
                if len(states) >= max_states:
                    raise BudgetExceeded(f"more than {max_states} automaton states")
                index[r] = len(states)
                states.append(r)
                depth[r] = dq + 1
                frontier.append(r)
            elif dq + 1 < depth[r]:
                # found a shorter route: expand again so depth bounds stay exact
                depth[r] = dq + 1
                frontier.append(r)
            edges.append((index[q], sym, index[r]))
    edges = sorted(set(edges), key=lambda e: (e[0], e[2], _symbol_key(e[1])))
    return Exploration(states, edges, depth)


def symbol_label(symbol) -> str:
    actions, delta = symbol
    return "{" + ",".join(str(a) for a in sorted(actions)) + "}," + str(delta)


def _symbol_key(symbol):
    return (symbol[1], sorted(symbol[0]))


def automaton_dot(dfa: Dfa, ex: Exploration, describe: Callable | None = None) -> str:
    lines = ["digraph automaton {", "  rankdir=LR;", '  node [shape=circle, fontsize=10];']
    for i, q in enumerate(ex.states):
        label = describe(q) if describe else str(i)
        shape = "doublecircle" if dfa.is_accepting(q) else "circle"
        style = ', style=filled, fillcolor="#dddddd"' if dfa.is_sink(q) else ""
        lines.append(f'  q{i} [label="{_dot_escape(label)}", shape={shape}{style}];')
    lines.append('  start [shape=point]; start -> q0;')
    for src, sym, dst in ex.edges:
        lines.append(f'  q{src} -> q{dst} [label="{_dot_escape(symbol_label(sym))}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def describe_sync_state(state) -> str:
    """Short label: structure count, pending obligations, flags."""
    if state == SINK:
        return SINK
    if isinstance(state, SyncState):
        active = sum(m.active for m in state.upsilon)
        return f"|Υ|={len(state.upsilon)} act={active} pend={len(state.pending)}"
    if isinstance(state, LiteralState):
        occupied = sum(1 for s in state.delta if s)
        return f"|Υ|={len(state.upsilon)} Δ={occupied}"
    return str(state)


def describe_game_state(state) -> str:
    tv, dom, sys_ = state
    tv_label = SINK if tv == SINK else " ".join(
        "-" if s is None else (f"{s[1]}:{s[2]}" if s[0] == "open" else f"{s[1]}.")
        for s in tv)
    return f"{tv_label} | D {describe_sync_state(dom)} | S {describe_sync_state(sys_)}"
