"""Domain objects for timeline-based games.

State variables, actions, events and event sequences, synchronization
rules, games, and the round mechanics that extend a partial plan.

Event indices in every public report are 1-based, matching the usual
notation ``ε_1 ... ε_n``.  The first event of a sequence carries delay 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

INF = math.inf

START = "start"
END = "end"


class ModelError(ValueError):
    """Raised when a domain object violates its invariants."""


# ---------------------------------------------------------------------------
# State variables


@dataclass(frozen=True)
class StateVariable:
    """A state variable ``x = (V_x, T_x, D_x, γ)``.

    ``durations`` maps each value to ``(dmin, dmax)`` with ``dmax`` possibly
    ``INF``; ``uncontrollable`` holds the values tagged ``u``.
    """

    name: str
    values: tuple[str, ...]
    transitions: Mapping[str, frozenset[str]]
    durations: Mapping[str, tuple[int, float]]
    uncontrollable: frozenset[str] = frozenset()

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ModelError(f"variable {self.name}: {problems[0]}")

    def problems(self) -> list[str]:
        out = []
        vals = set(self.values)
        if len(vals) != len(self.values):
            out.append("duplicate values")
        if not self.values:
            out.append("empty domain")
        if set(self.transitions) != vals:
            out.append("transition function is not total on values")
        for v, succ in self.transitions.items():
            if not set(succ) <= vals:
                out.append(f"transition from {v} to an undeclared value")
        if set(self.durations) != vals:
            out.append("duration function is not total on values")
        for v, (lo, hi) in self.durations.items():
            if lo < 1:
                out.append(f"duration of {v} has dmin < 1")
            if hi != INF and hi < lo:
                out.append(f"duration of {v} has dmin > dmax")
        if not self.uncontrollable <= vals:
            out.append("controllability tag on an undeclared value")
        return out

    def controllable(self, value: str) -> bool:
        return value not in self.uncontrollable

    @classmethod
    def make(cls, name, values, transitions=None, durations=None,
             uncontrollable=()):
        """Build a variable filling omitted entries with the defaults:
        any successor value, duration ``[1, INF]``, controllable."""
        values = tuple(values)
        transitions = dict(transitions or {})
        durations = dict(durations or {})
        trans = {v: frozenset(transitions.get(v, values)) for v in values}
        durs = {v: tuple(durations.get(v, (1, INF))) for v in values}
        return cls(name, values, trans, durs, frozenset(uncontrollable))


# ---------------------------------------------------------------------------
# Actions, events, event sequences


class Action(NamedTuple):
    kind: str  # START or END
    var: str
    value: str

    def __str__(self):
        return f"{self.kind}({self.var},{self.value})"

    @property
    def is_start(self) -> bool:
        return self.kind == START


def start(var: str, value: str) -> Action:
    return Action(START, var, value)


def end(var: str, value: str) -> Action:
    return Action(END, var, value)


def format_actions(actions: Iterable[Action]) -> str:
    return "{" + ",".join(str(a) for a in sorted(actions)) + "}"


@dataclass(frozen=True)
class Event:
    """An event ``(A, δ)``.  At most one start and one end per variable."""

    actions: frozenset[Action]
    delay: int

    def __post_init__(self):
        if not isinstance(self.actions, frozenset):
            object.__setattr__(self, "actions", frozenset(self.actions))
        if self.delay < 0:
            raise ModelError("negative delay")
        seen = set()
        for a in self.actions:
            if (a.kind, a.var) in seen:
                raise ModelError(f"two {a.kind} actions on {a.var} in one event")
            seen.add((a.kind, a.var))

    def __str__(self):
        return f"({format_actions(self.actions)},{self.delay})"


EventSequence = tuple  # tuple[Event, ...]


def event(actions: Iterable[Action], delay: int) -> Event:
    return Event(frozenset(actions), delay)


class Violation(NamedTuple):
    """First violated condition of the event-sequence definition.

    ``condition`` is 1-4 for the token-discipline conditions, 0 for a
    malformed delay or an undeclared action.
    """

    condition: int
    variable: str | None
    index: int
    message: str

    def __str__(self):
        return f"condition {self.condition} violated at event {self.index}: {self.message}"


def validate_event_sequence(seq: Sequence[Event],
                            variables: Iterable[StateVariable] | None = None
                            ) -> Violation | None:
    """Return the first violated condition, or None if ``seq`` is valid."""
    declared = None
    if variables is not None:
        declared = {(x.name, v) for x in variables for v in x.values}
    n = len(seq)
    open_value: dict[str, str] = {}
    seen: set[str] = set()
    for i, ev in enumerate(seq, start=1):
        if i == 1 and ev.delay != 0:
            return Violation(0, None, i, "the first event must carry delay 0")
        if i > 1 and ev.delay < 1:
            return Violation(0, None, i, "non-initial events need a positive delay")
        starts, ends = {}, {}
        for a in ev.actions:
            if declared is not None and (a.var, a.value) not in declared:
                return Violation(0, a.var, i, f"undeclared action {a}")
            (starts if a.kind == START else ends)[a.var] = a.value
        for x in sorted(starts.keys() | ends.keys()):
            if x in open_value and x in starts and x not in ends:
                return Violation(1, x, i, f"{x} restarted while its token is open")
            if x in ends:
                if x in open_value and open_value[x] != ends[x]:
                    return Violation(
                        2, x, i, f"end({x},{ends[x]}) while the open token holds {open_value[x]}")
                if x not in open_value and x in seen:
                    return Violation(2, x, i, f"{x} ended twice")
            if x in ends and x not in starts and i < n:
                return Violation(3, x, i, f"{x} ends without restarting before the last event")
            if x in starts and x not in ends and i > 1:
                return Violation(4, x, i, f"{x} starts after the first event without an end")
            seen.add(x)
            if x in ends:
                open_value.pop(x, None)
            if x in starts:
                open_value[x] = starts[x]
    return None


def is_valid(seq, variables=None) -> bool:
    return validate_event_sequence(seq, variables) is None


CLOSED = "closed"
OPEN_LEFT = "open-left"
OPEN_RIGHT = "open-right"
OPEN_BOTH = "open-both"


def openness(seq: Sequence[Event], var: str) -> str:
    """Openness of a valid sequence with respect to one variable."""
    left = False
    for ev in seq:
        kinds = {a.kind for a in ev.actions if a.var == var}
        if kinds:
            left = END in kinds
            break
    right = var in open_variables(seq)
    if left and right:
        return OPEN_BOTH
    if left:
        return OPEN_LEFT
    if right:
        return OPEN_RIGHT
    return CLOSED


def open_variables(seq: Sequence[Event]) -> set[str]:
    """Variables holding a started, not yet ended token at the end of ``seq``."""
    current: set[str] = set()
    for ev in seq:
        for a in ev.actions:
            if a.kind == END:
                current.discard(a.var)
        for a in ev.actions:
            if a.kind == START:
                current.add(a.var)
    return current


def is_closed(seq: Sequence[Event]) -> bool:
    return not open_variables(seq) and all(
        openness(seq, x) == CLOSED for x in mentioned_variables(seq))


def mentioned_variables(seq: Sequence[Event]) -> set[str]:
    return {a.var for ev in seq for a in ev.actions}


def elapsed(seq: Sequence[Event], i: int, j: int) -> int:
    """Time between events ``i`` and ``j`` (1-based, ``i <= j``)."""
    if not (1 <= i <= j <= len(seq)):
        raise IndexError(f"elapsed({i}, {j}) out of range for {len(seq)} events")
    return sum(ev.delay for ev in seq[i:j])


def duration(seq: Sequence[Event]) -> int:
    return elapsed(seq, 1, len(seq)) if seq else 0


def timestamps(seq: Sequence[Event]) -> list[int]:
    out, t = [], 0
    for k, ev in enumerate(seq):
        if k:
            t += ev.delay
        out.append(t)
    return out


def normalize_gaps(seq: Sequence[Event], d: int) -> tuple[Event, ...]:
    """Split every delay larger than ``d`` by inserting empty events."""
    if d < 1:
        raise ValueError("gap bound must be at least 1")
    out = []
    for k, ev in enumerate(seq):
        delay = ev.delay
        if k:
            while delay > d:
                out.append(Event(frozenset(), d))
                delay -= d
        out.append(Event(ev.actions, delay))
    return tuple(out)


def drop_empty_events(seq: Sequence[Event]) -> tuple[Event, ...]:
    """Inverse of :func:`normalize_gaps`: fold empty events into the next one."""
    out = []
    carry = 0
    for k, ev in enumerate(seq):
        if not ev.actions and 0 < k < len(seq) - 1:
            carry += ev.delay
            continue
        out.append(Event(ev.actions, ev.delay + carry))
        carry = 0
    return tuple(out)


# ---------------------------------------------------------------------------
# Synchronization rules


class Term(NamedTuple):
    endpoint: str  # START or END
    token: str

    def __str__(self):
        return f"{self.endpoint}({self.token})"


class Atom(NamedTuple):
    """``lhs <=[lower, upper] rhs``: ``lower <= rhs - lhs <= upper``."""

    lhs: Term
    rhs: Term
    lower: int
    upper: float

    def __str__(self):
        return f"{self.lhs} <=[{self.lower},{_bound(self.upper)}] {self.rhs}"


def _bound(u):
    return "inf" if u == INF else str(int(u))


class Quantifier(NamedTuple):
    token: str
    var: str
    value: str

    def __str__(self):
        return f"{self.token}[{self.var}={self.value}]"


class Statement(NamedTuple):
    quantifiers: tuple[Quantifier, ...]
    atoms: tuple[Atom, ...]

    def token_names(self) -> list[str]:
        return [q.token for q in self.quantifiers]


@dataclass(frozen=True)
class Rule:
    """``trigger => E_1 | ... | E_k``; ``trigger`` is None for goals."""

    name: str
    trigger: Quantifier | None
    statements: tuple[Statement, ...]

    @property
    def triggerless(self) -> bool:
        return self.trigger is None


@dataclass(frozen=True)
class Problem:
    """A planning problem ``(SV, S)``."""

    variables: tuple[StateVariable, ...]
    rules: tuple[Rule, ...]

    def variable(self, name: str) -> StateVariable:
        for x in self.variables:
            if x.name == name:
                return x
        raise KeyError(name)

    def actions(self) -> frozenset[Action]:
        return all_actions(self.variables)


@dataclass(frozen=True)
class Game:
    """A timeline-based game ``(SV_C, SV_E, S, D)``."""

    controlled: tuple[StateVariable, ...] = ()
    external: tuple[StateVariable, ...] = ()
    system_rules: tuple[Rule, ...] = ()
    domain_rules: tuple[Rule, ...] = ()

    @property
    def variables(self) -> tuple[StateVariable, ...]:
        return self.controlled + self.external

    def variable(self, name: str) -> StateVariable:
        for x in self.variables:
            if x.name == name:
                return x
        raise KeyError(name)

    def system_problem(self) -> Problem:
        return Problem(self.variables, self.system_rules)

    def domain_problem(self) -> Problem:
        return Problem(self.variables, self.domain_rules)

    def is_controlled(self, var: str) -> bool:
        return any(x.name == var for x in self.controlled)


def all_actions(variables: Iterable[StateVariable]) -> frozenset[Action]:
    return frozenset(Action(kind, x.name, v)
                     for x in variables for v in x.values for kind in (START, END))


def rule_problems(rule: Rule, variables: Mapping[str, StateVariable]) -> list[str]:
    out = []

    def check_quant(q):
        if q.var not in variables:
            out.append(f"rule {rule.name}: undeclared variable {q.var}")
        elif q.value not in variables[q.var].values:
            out.append(f"rule {rule.name}: {q.value} is not a value of {q.var}")

    if rule.trigger is not None:
        check_quant(rule.trigger)
    for stmt in rule.statements:
        names = [q.token for q in stmt.quantifiers]
        if rule.trigger is not None:
            names.append(rule.trigger.token)
        if len(set(names)) != len(names):
            out.append(f"rule {rule.name}: duplicate token name in one statement")
        for q in stmt.quantifiers:
            check_quant(q)
        for atom in stmt.atoms:
            for term in (atom.lhs, atom.rhs):
                if term.token not in names:
                    out.append(f"rule {rule.name}: unbound token name {term.token}")
            if atom.lower < 0:
                out.append(f"rule {rule.name}: negative lower bound")
            if atom.upper != INF and atom.lower > atom.upper:
                out.append(f"rule {rule.name}: atom bounds with l > u")
    return out


def validate_game(game: Game) -> list[str]:
    """Check every model invariant of ``game``; return the problems found."""
    out = []
    names = [x.name for x in game.variables]
    if len(set(names)) != len(names):
        out.append("variable names are not unique")
    for x in game.variables:
        out.extend(f"variable {x.name}: {p}" for p in x.problems())
    table = {x.name: x for x in game.variables}
    for rule in game.system_rules + game.domain_rules:
        out.extend(rule_problems(rule, table))
    return out


# ---------------------------------------------------------------------------
# Players, moves and rounds

CHARLIE = "charlie"
EVE = "eve"


def partition_actions(game: Game) -> tuple[frozenset[Action], frozenset[Action]]:
    """Split all actions into Charlie's and Eve's."""
    charlie, eve = set(), set()
    for x in game.variables:
        own = charlie if game.is_controlled(x.name) else eve
        for v in x.values:
            own.add(start(x.name, v))
            (charlie if x.controllable(v) else eve).add(end(x.name, v))
    return frozenset(charlie), frozenset(eve)


def action_owner(game: Game, action: Action) -> str:
    if action.kind == START:
        return CHARLIE if game.is_controlled(action.var) else EVE
    return CHARLIE if game.variable(action.var).controllable(action.value) else EVE


class Wait(NamedTuple):
    delay: int

    def __str__(self):
        return f"wait({self.delay})"


class Play(NamedTuple):
    actions: frozenset

    def __str__(self):
        return f"play({format_actions(self.actions)})"


class TimedPlay(NamedTuple):
    delay: int
    actions: frozenset

    def __str__(self):
        return f"play({self.delay},{format_actions(self.actions)})"


Move = Wait | Play | TimedPlay


def move_kind(move: Move) -> str | None:
    """'starting', 'ending', or None for an empty play."""
    if isinstance(move, Wait):
        return "ending"
    kinds = {a.kind for a in move.actions}
    if len(kinds) > 1:
        raise ModelError(f"{move} mixes starting and ending actions")
    if not kinds:
        return "ending" if isinstance(move, TimedPlay) else None
    return "starting" if kinds == {START} else "ending"


@dataclass(frozen=True)
class Round:
    """A pair of moves, Charlie's first.

    Charlie may play an empty set in a starting round: when only Eve has
    tokens to restart the game would otherwise have no applicable round.
    """

    charlie: Move
    eve: Move
    kind: str = field(init=False)

    def __post_init__(self):
        c, e = self.charlie, self.eve
        if isinstance(c, TimedPlay) or isinstance(e, Wait):
            raise ModelError("only Charlie waits and only Eve plays timed moves")
        if isinstance(c, Wait):
            if not isinstance(e, TimedPlay):
                raise ModelError("a wait pairs only with a timed play")
            if c.delay < 1 or e.delay < 1:
                raise ModelError("delays must be positive")
            if e.delay > c.delay:
                raise ModelError(f"timed play delay {e.delay} exceeds wait({c.delay})")
        elif isinstance(e, TimedPlay):
            raise ModelError("a timed play pairs only with a wait")
        ck, ek = move_kind(c), move_kind(e)
        if ck and ek and ck != ek:
            raise ModelError("moves of a round must be both starting or both ending")
        object.__setattr__(self, "kind", ck or ek or "starting")

    @property
    def delay(self) -> int:
        return self.eve.delay if isinstance(self.eve, TimedPlay) else 1

    @property
    def actions(self) -> frozenset[Action]:
        c = frozenset() if isinstance(self.charlie, Wait) else self.charlie.actions
        return c | self.eve.actions

    def __str__(self):
        return f"({self.charlie}, {self.eve})"


class NotApplicable(Exception):
    def __init__(self, clause: str, message: str):
        super().__init__(message)
        self.clause = clause


def apply_round(seq: Sequence[Event], rnd: Round, game: Game,
                partition=None) -> tuple[Event, ...]:
    """Outcome of ``rnd`` on the partial plan ``seq``.

    Raises :class:`NotApplicable` with ``clause`` one of ``ownership``,
    ``alternation`` or ``validity``.  ``partition`` may carry a precomputed
    :func:`partition_actions` result.
    """
    charlie_actions, eve_actions = partition or partition_actions(game)
    c = frozenset() if isinstance(rnd.charlie, Wait) else rnd.charlie.actions
    if not c <= charlie_actions or not rnd.eve.actions <= eve_actions:
        raise NotApplicable("ownership", "a player plays an action it does not own")
    all_open = bool(game.variables) and open_variables(seq) >= {x.name for x in game.variables}
    if (rnd.kind == "ending") != all_open:
        raise NotApplicable(
            "alternation", "ending rounds apply exactly when every variable is open")
    if rnd.kind == "starting":
        last = seq[-1] if seq else Event(frozenset(), 0)
        try:
            merged = Event(last.actions | rnd.actions, last.delay)
        except ModelError as exc:
            raise NotApplicable("validity", str(exc)) from None
        out = tuple(seq[:-1]) + (merged,)
    else:
        try:
            out = tuple(seq) + (Event(rnd.actions, rnd.delay),)
        except ModelError as exc:
            raise NotApplicable("validity", str(exc)) from None
    bad = validate_event_sequence(out, game.variables)
    if bad is not None:
        raise NotApplicable("validity", str(bad))
    return out


# ---------------------------------------------------------------------------
# JSON

PLAN_FORMAT_VERSION = 1


def plan_to_json(seq: Sequence[Event]) -> dict:
    return {
        "format_version": PLAN_FORMAT_VERSION,
        "events": [
            {"actions": [{"kind": a.kind, "var": a.var, "value": a.value}
                         for a in sorted(ev.actions)],
             "delay": ev.delay}
            for ev in seq
        ],
    }


def plan_from_json(data) -> tuple[Event, ...]:
    """Accept either ``{"events": [...]}`` or a bare list of events."""
    if isinstance(data, dict):
        data = data["events"]
    out = []
    for item in data:
        acts = []
        for a in item["actions"]:
            if a["kind"] not in (START, END):
                raise ModelError(f"unknown action kind {a['kind']!r}")
            acts.append(Action(a["kind"], a["var"], a["value"]))
        out.append(Event(frozenset(acts), int(item["delay"])))
    return tuple(out)
