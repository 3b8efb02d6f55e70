"""Difference bound matrices and matching structures.

A matching structure tracks one partially matched existential statement.
Terms are numbered ``2k`` for ``start(a_k)`` and ``2k+1`` for ``end(a_k)``,
where ``a_0`` is the trigger token.  ``entry(T, T')`` is an upper bound on
``time(T) - time(T')``; the matrix is stored row-major in a flat tuple and
the matched set as a bitmask.
"""
from __future__ import annotations

from functools import reduce
from typing import Iterable, Mapping

from .model import END, INF, START, Action, Quantifier, Rule, Statement, Term


class DbmError(ValueError):
    pass


class StatementShape:
    """Static data shared by every matching structure of one statement."""

    __slots__ = ("key", "rule", "statement", "tokens", "terms", "n",
                 "start_actions", "end_actions")

    def __init__(self, key, rule: Rule, statement: Statement):
        if rule.trigger is None:
            raise DbmError(f"rule {rule.name} has no trigger; desugar goals first")
        self.key = key
        self.rule = rule
        self.statement = statement
        self.tokens: tuple[Quantifier, ...] = (rule.trigger,) + tuple(statement.quantifiers)
        self.terms = tuple(Term(kind, q.token) for q in self.tokens for kind in (START, END))
        self.n = len(self.terms)
        self.start_actions = tuple(Action(START, q.var, q.value) for q in self.tokens)
        self.end_actions = tuple(Action(END, q.var, q.value) for q in self.tokens)

    def index(self, term: Term) -> int:
        return self.terms.index(term)


class MatchingStructure:
    """``(V, D, M, t)``: terms come from the shape, ``D`` is flat, ``M`` a bitmask."""

    __slots__ = ("shape", "D", "M", "age", "_hash")

    def __init__(self, shape: StatementShape, D: tuple, M: int = 0, age: int = 0):
        self.shape = shape
        self.D = D
        self.M = M
        self.age = age
        self._hash = hash((shape.key, D, M, age))

    # identity -------------------------------------------------------------
    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (isinstance(other, MatchingStructure) and self._hash == other._hash
                and self.shape.key == other.shape.key and self.M == other.M
                and self.age == other.age and self.D == other.D)

    def sort_key(self):
        return (self.shape.key, self.M, self.age, tuple(_finite_key(x) for x in self.D))

    def __repr__(self):
        matched = ",".join(str(t) for i, t in enumerate(self.shape.terms) if self.M >> i & 1)
        return f"MS({self.shape.key}, M={{{matched}}}, t={self.age})"

    # classification -------------------------------------------------------
    @property
    def full(self) -> int:
        return (1 << self.shape.n) - 1

    @property
    def closed(self) -> bool:
        return self.M == self.full

    @property
    def initial(self) -> bool:
        return self.M == 0

    @property
    def active(self) -> bool:
        return bool(self.M & 1) and not self.closed

    def entry(self, row, col):
        n = self.shape.n
        if isinstance(row, Term):
            row = self.shape.index(row)
        if isinstance(col, Term):
            col = self.shape.index(col)
        return self.D[row * n + col]

    def matched_terms(self) -> frozenset[Term]:
        return frozenset(t for i, t in enumerate(self.shape.terms) if self.M >> i & 1)

    def with_matched(self, terms: Iterable[Term]) -> "MatchingStructure":
        mask = self.M
        for t in terms:
            mask |= 1 << self.shape.index(t)
        return MatchingStructure(self.shape, self.D, mask, self.age)


def _finite_key(x):
    return (1, 0) if x == INF else (0, x)


# ---------------------------------------------------------------------------
# Compilation


def compile_statement(rule: Rule, statement: Statement,
                      durations: Mapping[tuple[str, str], tuple[int, float]] | None,
                      key=None) -> MatchingStructure:
    """Initial matching structure of ``statement``.

    ``durations`` maps ``(var, value)`` to ``(dmin, dmax)`` and augments the
    matrix with the duration bounds of the quantified tokens.  Pass None to
    compile the atoms alone.
    """
    shape = StatementShape(key if key is not None else (rule.name, 0), rule, statement)
    n = shape.n
    D = [INF] * (n * n)
    for i in range(n):
        D[i * n + i] = 0

    def tighten(row, col, bound):
        k = row * n + col
        if bound < D[k]:
            D[k] = bound

    names = [q.token for q in shape.tokens]
    for atom in statement.atoms:
        try:
            lhs = shape.index(atom.lhs)
            rhs = shape.index(atom.rhs)
        except ValueError:
            raise DbmError(f"atom {atom} mentions a token outside {names}") from None
        if atom.upper != INF:
            tighten(rhs, lhs, int(atom.upper))
        tighten(lhs, rhs, -atom.lower)
    if durations is not None:
        for k, q in enumerate(shape.tokens):
            if k == 0:
                continue
            try:
                dmin, dmax = durations[(q.var, q.value)]
            except KeyError:
                raise DbmError(f"no duration known for {q.var}={q.value}") from None
            tighten(2 * k, 2 * k + 1, -dmin)
            if dmax != INF:
                tighten(2 * k + 1, 2 * k, int(dmax))
    return MatchingStructure(shape, tuple(D), 0, 0)


def durations_of(variables) -> dict[tuple[str, str], tuple[int, float]]:
    return {(x.name, v): x.durations[v] for x in variables for v in x.values}


def _rule_atoms(rules):
    for rule in rules:
        for stmt in rule.statements:
            yield from stmt.atoms


def window(rules: Iterable[Rule]) -> int:
    """Product of every finite non-zero atom upper bound (1 if none)."""
    uppers = [int(a.upper) for a in _rule_atoms(rules) if a.upper != INF and a.upper != 0]
    return reduce(lambda x, y: x * y, uppers, 1)


def alphabet_bound(rules: Iterable[Rule]) -> int:
    """``d = max(L, U) + 1`` over lower bounds and finite upper bounds."""
    best = 0
    for a in _rule_atoms(rules):
        best = max(best, a.lower)
        if a.upper != INF:
            best = max(best, int(a.upper))
    return best + 1


# ---------------------------------------------------------------------------
# Time shifting and matching


def shift(m: MatchingStructure, delta: int) -> MatchingStructure:
    """``m + delta``: relax lower bounds and tighten upper bounds of split pairs."""
    if delta < 1:
        raise DbmError("shift needs a positive delay")
    M = m.M
    if M == 0 or m.closed:
        return m
    n = m.shape.n
    D = list(m.D)
    for i in range(n):
        row_in = M >> i & 1
        base = i * n
        for j in range(n):
            if (M >> j & 1) == row_in:
                continue
            x = D[base + j]
            if x != INF:
                D[base + j] = x + delta if row_in else x - delta
    age = m.age + delta if m.active else m.age
    return MatchingStructure(m.shape, tuple(D), M, age)


def admissible(m: MatchingStructure, delta: int) -> bool:
    """True iff no unmatched term overruns its upper bound after ``delta``."""
    M = m.M
    if M == 0:
        return True
    n = m.shape.n
    D = m.D
    for j in range(n):
        if not M >> j & 1:
            continue
        for i in range(n):
            if not M >> i & 1 and D[i * n + j] < delta:
                return False
    return True


def match_sets(m: MatchingStructure, actions: frozenset, delta: int) -> list[int]:
    """Every bitmask ``I`` for which ``(actions, delta)`` is an I-match event.

    An end term is forced exactly when its token's start is matched, its end
    is not, and the corresponding end action occurs.  Tokens already closed
    are left alone when their value ends again.
    """
    if not admissible(m, delta):
        return []
    shape = m.shape
    n = shape.n
    M = m.M
    D = m.D
    forced = 0
    optional = []
    for k in range(len(shape.tokens)):
        s, e = 2 * k, 2 * k + 1
        if M >> s & 1:
            if not M >> e & 1 and shape.end_actions[k] in actions:
                forced |= 1 << e
        elif shape.start_actions[k] in actions:
            optional.append(s)
    out = []
    for choice in range(1 << len(optional)):
        I = forced
        for b, s in enumerate(optional):
            if choice >> b & 1:
                I |= 1 << s
        if _relations_hold(D, n, M, I, delta):
            out.append(I)
    return out


def _relations_hold(D, n, M, I, delta) -> bool:
    MI = M | I
    for t in range(n):
        if not I >> t & 1:
            continue
        for u in range(n):
            if u == t:
                continue
            into = D[u * n + t]
            # preceding terms must already be matched
            if into <= 0 and not MI >> u & 1:
                return False
            # lower bounds from matched terms
            if M >> u & 1 and into != INF and delta < -into:
                return False
            # simultaneous matches must be allowed to coincide
            if I >> u & 1 and (into < 0 or D[t * n + u] < 0):
                return False
    return True


def step(m: MatchingStructure, actions: frozenset, delta: int) -> list[MatchingStructure]:
    """All successors ``(m + delta) ∪ I`` over I-match events."""
    sets = match_sets(m, actions, delta)
    if not sets:
        return []
    shifted = shift(m, delta)
    return [shifted if I == 0 else
            MatchingStructure(shifted.shape, shifted.D, shifted.M | I, shifted.age)
            for I in sets]


def saturate(m: MatchingStructure, cap: int) -> MatchingStructure:
    """Canonical representative with the same future behaviour.

    Satisfied lower bounds (matched row, unmatched column, value >= 0) all
    read as 0; entries between two matched terms are never read again; the
    age is capped.
    """
    M = m.M
    age = min(m.age, cap)
    if M == 0:
        return m if age == m.age else MatchingStructure(m.shape, m.D, M, age)
    n = m.shape.n
    D = list(m.D)
    for i in range(n):
        if not M >> i & 1:
            continue
        base = i * n
        for j in range(n):
            if j == i:
                continue
            k = base + j
            if M >> j & 1:
                D[k] = INF
            elif D[k] != INF and D[k] > 0:
                D[k] = 0
    D = tuple(D)
    if D == m.D and age == m.age:
        return m
    return MatchingStructure(m.shape, D, M, age)


# ---------------------------------------------------------------------------
# Debug output


def format_matrix(m: MatchingStructure) -> str:
    """Table with row ``T`` and column ``T'`` holding ``entry(T, T')``.

    Infinite entries are left blank.
    """
    labels = [str(t) for t in m.shape.terms]
    n = m.shape.n
    cells = [["" if m.D[i * n + j] == INF else str(m.D[i * n + j]) for j in range(n)]
             for i in range(n)]
    width = max(len(x) for x in labels + [c for row in cells for c in row] + ["0"])
    head = " " * width + " | " + " ".join(x.rjust(width) for x in labels)
    lines = [head, "-" * len(head)]
    for i in range(n):
        mark = "*" if m.M >> i & 1 else " "
        lines.append(labels[i].rjust(width) + " |" + mark + " ".join(
            c.rjust(width) for c in cells[i]))
    lines.append(f"age={m.age}")
    return "\n".join(lines)
