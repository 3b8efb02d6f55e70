"""Reader and printer for ``.tg`` game specifications.

A hand-written tokenizer and recursive-descent parser.  Parsing stops at
the first syntax error; semantic checks run over the whole tree and report
every problem found.  The grammar is documented in ``docs/grammar.md``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import NamedTuple

from .model import (END, INF, START, Action, Atom, Event, Game, ModelError, Quantifier, Rule,
                    StateVariable, Statement, Term, validate_game)

GOAL_VAR = "__goal"
GOAL_VALUE = "g"
GOAL_TOKEN = "__trigger"

KEYWORDS = {
    "controlled", "external", "var", "values", "transitions", "duration",
    "uncontrollable", "system", "domain", "rule", "goal", "exists", "and",
    "true", "false", "start", "end", "inf",
}


class SpecSource(NamedTuple):
    text: str
    origin: str = "<stdin>"


class Diagnostic(NamedTuple):
    severity: str  # "error" or "warning"
    message: str
    line: int
    column: int
    origin: str = "<stdin>"

    def __str__(self):
        return f"{self.origin}:{self.line}:{self.column}: {self.severity}: {self.message}"


class SpecError(Exception):
    """Raised by :func:`load_game` when parsing produces errors."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class _Token(NamedTuple):
    kind: str  # ident, int, sym, eof
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>=>|->|<=|&&|[{}\[\];:,.=|()])
""", re.VERBOSE)


class _SyntaxError(Exception):
    def __init__(self, message, line, column):
        super().__init__(message)
        self.line = line
        self.column = column


def _tokenize(text: str) -> list[_Token]:
    out = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise _SyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind not in ("ws", "comment"):
            if s == "&&":
                s = "and"
                kind = "ident"
            out.append(_Token(kind, s, line, col))
        nl = s.count("\n") if kind in ("ws",) else 0
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(m.group())
        pos = m.end()
    out.append(_Token("eof", "", line, col))
    return out


# ---------------------------------------------------------------------------
# Parse tree with positions, checked afterwards


@dataclass
class _VarDecl:
    name: str
    controlled: bool
    pos: tuple
    values: list
    transitions: dict
    durations: dict
    uncontrollable: list


@dataclass
class _RuleDecl:
    name: str
    kind: str  # system or domain
    trigger: Quantifier | None
    statements: list
    pos: tuple
    positions: dict  # id(object) -> position, for diagnostics


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0
        self.vars: list[_VarDecl] = []
        self.rules: list[_RuleDecl] = []
        self.goal_count = 0
        self.pos_of: dict = {}

    @property
    def tok(self) -> _Token:
        return self.toks[self.i]

    def advance(self) -> _Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, expected):
        t = self.tok
        got = "end of input" if t.kind == "eof" else repr(t.text)
        raise _SyntaxError(f"expected {expected}, found {got}", t.line, t.column)

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("ident", "sym")

    def expect(self, text) -> _Token:
        if not self.at(text):
            self.fail(repr(text))
        return self.advance()

    def ident(self, what="identifier") -> _Token:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            self.fail(what)
        return self.advance()

    def integer(self) -> int:
        if self.tok.kind != "int":
            self.fail("integer")
        return int(self.advance().text)

    def bound(self):
        if self.at("inf"):
            self.advance()
            return INF
        return self.integer()

    # items ---------------------------------------------------------------
    def parse(self):
        while self.tok.kind != "eof":
            if self.at("controlled") or self.at("external"):
                self.var_decl()
            elif self.at("system") or self.at("domain"):
                kind = self.advance().text
                if self.at("rule"):
                    self.rule_decl(kind)
                elif self.at("goal"):
                    self.goal_decl(kind)
                else:
                    self.fail("'rule' or 'goal'")
            elif self.at("goal"):
                self.goal_decl("system")
            else:
                self.fail("a variable, rule or goal declaration")

    def var_decl(self):
        controlled = self.advance().text == "controlled"
        self.expect("var")
        name = self.ident("variable name")
        decl = _VarDecl(name.text, controlled, (name.line, name.column), [], {}, {}, [])
        self.expect("{")
        while not self.at("}"):
            if self.at("values"):
                self.advance()
                decl.values.extend(self.ident_list("value"))
            elif self.at("transitions"):
                self.advance()
                src = self.ident("value")
                self.expect("->")
                # an empty list declares a final value
                targets = [] if self.at(";") else self.ident_list("value")
                decl.transitions.setdefault((src.text, (src.line, src.column)), []).extend(
                    targets)
            elif self.at("duration"):
                self.advance()
                v = self.ident("value")
                self.expect("[")
                lo = self.integer()
                self.expect(",")
                hi = self.bound()
                self.expect("]")
                decl.durations[(v.text, (v.line, v.column))] = (lo, hi)
            elif self.at("uncontrollable"):
                self.advance()
                decl.uncontrollable.extend(self.ident_list("value"))
            else:
                self.fail("'values', 'transitions', 'duration', 'uncontrollable' or '}'")
            self.expect(";")
        self.expect("}")
        self.vars.append(decl)

    def ident_list(self, what):
        out = [self.ident(what)]
        while self.at(","):
            self.advance()
            out.append(self.ident(what))
        return out

    def rule_decl(self, kind):
        self.expect("rule")
        name = self.ident("rule name")
        self.expect(":")
        trigger = self.quantifier()
        self.expect("=>")
        statements = self.body()
        self.expect(";")
        self.rules.append(_RuleDecl(name.text, kind, trigger, statements,
                                    (name.line, name.column), self.pos_of))

    def goal_decl(self, kind):
        start = self.expect("goal")
        if self.tok.kind == "ident" and self.tok.text not in KEYWORDS:
            name = self.advance().text
        else:
            self.goal_count += 1
            name = f"goal{self.goal_count}"
        self.expect(":")
        statements = self.body()
        self.expect(";")
        self.rules.append(_RuleDecl(name, kind, None, statements,
                                    (start.line, start.column), self.pos_of))

    def body(self):
        if self.at("false"):
            self.advance()
            return []
        out = [self.statement()]
        while self.at("|"):
            self.advance()
            out.append(self.statement())
        return out

    def statement(self):
        t = self.tok
        if self.at("true"):
            self.advance()
            stmt = Statement((), ())
        else:
            self.expect("exists")
            quants = []
            while self.tok.kind == "ident" and self.tok.text not in KEYWORDS:
                quants.append(self.quantifier())
            atoms = []
            if self.at("."):
                self.advance()
                atoms.append(self.atom())
                while self.at("and"):
                    self.advance()
                    atoms.append(self.atom())
            stmt = Statement(tuple(quants), tuple(atoms))
        self.pos_of[id(stmt)] = (t.line, t.column)
        return stmt

    def quantifier(self):
        name = self.ident("token name")
        self.expect("[")
        var = self.ident("variable name")
        self.expect("=")
        value = self.ident("value")
        self.expect("]")
        q = Quantifier(name.text, var.text, value.text)
        self.pos_of[("q", id(q))] = (name.line, name.column)
        self.pos_of.setdefault(("var", q), (var.line, var.column))
        self.pos_of.setdefault(("value", q), (value.line, value.column))
        return q

    def term(self):
        t = self.tok
        if not (self.at("start") or self.at("end")):
            self.fail("'start' or 'end'")
        endpoint = self.advance().text
        self.expect("(")
        name = self.ident("token name")
        self.expect(")")
        term = Term(endpoint, name.text)
        self.pos_of.setdefault(("term", term), (t.line, t.column))
        return term

    def atom(self):
        t = self.tok
        lhs = self.term()
        if self.at("="):
            self.advance()
            lo, hi = 0, 0
        elif self.at("<="):
            self.advance()
            lo, hi = 0, INF
            if self.at("["):
                self.advance()
                lo = self.integer()
                self.expect(",")
                hi = self.bound()
                self.expect("]")
        else:
            self.fail("'<=', '<=[l,u]' or '='")
        rhs = self.term()
        atom = Atom(lhs, rhs, lo, hi)
        self.pos_of.setdefault(("atom", atom), (t.line, t.column))
        return atom


# ---------------------------------------------------------------------------
# Semantic checks


def _check(parser: _Parser, origin: str):
    diags = []
    pos_of = parser.pos_of

    def err(msg, pos):
        diags.append(Diagnostic("error", msg, pos[0], pos[1], origin))

    variables = {}
    controlled, external = [], []
    for decl in parser.vars:
        if decl.name in variables:
            err(f"variable {decl.name} declared twice", decl.pos)
            continue
        values = [t.text for t in decl.values]
        if not values:
            err(f"variable {decl.name} has an empty domain", decl.pos)
            continue
        seen = set()
        for t in decl.values:
            if t.text in seen:
                err(f"value {t.text} declared twice in {decl.name}", (t.line, t.column))
            seen.add(t.text)
        ok = True
        transitions = {}
        for (src, pos), targets in decl.transitions.items():
            if src not in seen:
                err(f"undeclared value {src} of variable {decl.name}", pos)
                ok = False
            for t in targets:
                if t.text not in seen:
                    err(f"undeclared value {t.text} of variable {decl.name}", (t.line, t.column))
                    ok = False
            transitions.setdefault(src, []).extend(t.text for t in targets)
        durations = {}
        for (v, pos), (lo, hi) in decl.durations.items():
            if v not in seen:
                err(f"undeclared value {v} of variable {decl.name}", pos)
                ok = False
            if lo < 1:
                err(f"duration of {decl.name}={v} must have dmin >= 1", pos)
                ok = False
            if hi != INF and lo > hi:
                err(f"duration of {decl.name}={v} has dmin {lo} > dmax {hi}", pos)
                ok = False
            durations[v] = (lo, hi)
        for t in decl.uncontrollable:
            if t.text not in seen:
                err(f"undeclared value {t.text} of variable {decl.name}", (t.line, t.column))
                ok = False
        if not ok:
            continue
        try:
            x = StateVariable.make(decl.name, list(dict.fromkeys(values)), transitions,
                                   durations, [t.text for t in decl.uncontrollable])
        except ModelError as exc:
            err(str(exc), decl.pos)
            continue
        variables[x.name] = x
        (controlled if decl.controlled else external).append(x)

    def check_quant(q):
        if q.var not in variables:
            err(f"undeclared variable {q.var}", pos_of.get(("var", q), (0, 0)))
        elif q.value not in variables[q.var].values:
            err(f"undeclared value {q.value} of variable {q.var}",
                pos_of.get(("value", q), (0, 0)))

    system, domain = [], []
    names = set()
    for r in parser.rules:
        if r.name in names:
            err(f"rule {r.name} declared twice", r.pos)
        names.add(r.name)
        if r.trigger is not None:
            check_quant(r.trigger)
        for stmt in r.statements:
            spos = pos_of.get(id(stmt), r.pos)
            bound = [] if r.trigger is None else [r.trigger.token]
            for q in stmt.quantifiers:
                check_quant(q)
                if q.token in bound:
                    err(f"duplicate token name {q.token} in one existential statement",
                        pos_of.get(("var", q), spos))
                bound.append(q.token)
            for atom in stmt.atoms:
                apos = pos_of.get(("atom", atom), spos)
                for term in (atom.lhs, atom.rhs):
                    if term.token not in bound:
                        err(f"token name {term.token} is not quantified",
                            pos_of.get(("term", term), apos))
                if atom.upper != INF and atom.lower > atom.upper:
                    err(f"atom bounds [{atom.lower},{atom.upper}] have l > u", apos)
        rule = Rule(r.name, r.trigger, tuple(r.statements))
        (system if r.kind == "system" else domain).append(rule)
    if diags:
        return None, diags
    game = Game(tuple(controlled), tuple(external), tuple(system), tuple(domain))
    for problem in validate_game(game):
        diags.append(Diagnostic("error", problem, 1, 1, origin))
    return (None if diags else game), diags


def parse_game(src: SpecSource | str, origin: str | None = None):
    """Return ``(game, diagnostics)``; ``game`` is None when any error occurs."""
    if isinstance(src, str):
        src = SpecSource(src, origin or "<stdin>")
    try:
        parser = _Parser(_tokenize(src.text))
        parser.parse()
    except _SyntaxError as exc:
        return None, [Diagnostic("error", f"syntax error: {exc}", exc.line, exc.column, src.origin)]
    return _check(parser, src.origin)


def load_game(path) -> Game:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    game, diags = parse_game(SpecSource(text, str(path)))
    if game is None:
        raise SpecError(diags)
    return game


def parse_or_raise(text: str, origin: str = "<string>") -> Game:
    game, diags = parse_game(SpecSource(text, origin))
    if game is None:
        raise SpecError(diags)
    return game


# ---------------------------------------------------------------------------
# Goals


def desugar_goals(game: Game) -> Game:
    """Replace goals by rules triggered on a shared fresh variable.

    The fresh controlled variable has a single final value (no successor),
    duration ``[1, inf]`` and is controllable, so a plan holds exactly one
    goal token spanning all of it.  Games without goals are
    returned unchanged.
    """
    rules = game.system_rules + game.domain_rules
    if all(r.trigger is not None for r in rules):
        return game
    taken = {x.name for x in game.variables}
    var = GOAL_VAR
    while var in taken:
        var = "_" + var

    def convert(r: Rule) -> Rule:
        if r.trigger is not None:
            return r
        names = {q.token for s in r.statements for q in s.quantifiers}
        token = GOAL_TOKEN
        while token in names:
            token = "_" + token
        return Rule(r.name, Quantifier(token, var, GOAL_VALUE), r.statements)

    goal = StateVariable.make(var, [GOAL_VALUE], {GOAL_VALUE: []})
    return replace(game, controlled=game.controlled + (goal,),
                   system_rules=tuple(convert(r) for r in game.system_rules),
                   domain_rules=tuple(convert(r) for r in game.domain_rules))


def desugar_plan(game: Game, seq):
    """Extend a plan of ``game`` with the goal timeline of its desugaring.

    The goal token spans the whole plan.  Plans of games without goals
    and empty plans are returned unchanged.
    """
    sugared = desugar_goals(game)
    if sugared is game or not seq:
        return tuple(seq)
    var = sugared.controlled[-1].name
    first = Event(seq[0].actions | {Action(START, var, GOAL_VALUE)}, seq[0].delay)
    if len(seq) == 1:
        return (first,)
    last = Event(seq[-1].actions | {Action(END, var, GOAL_VALUE)}, seq[-1].delay)
    return (first,) + tuple(seq[1:-1]) + (last,)


def project_plan(game: Game, seq):
    """Drop the actions of the goal variable added by :func:`desugar_goals`."""
    names = {x.name for x in game.variables}
    return tuple(Event(frozenset(a for a in ev.actions if a.var in names), ev.delay)
                 for ev in seq)


# ---------------------------------------------------------------------------
# Printing


def _bound(u):
    return "inf" if u == INF else str(int(u))


def format_atom(a: Atom) -> str:
    if (a.lower, a.upper) == (0, 0):
        rel = "="
    elif (a.lower, a.upper) == (0, INF):
        rel = "<="
    else:
        rel = f"<=[{a.lower}, {_bound(a.upper)}]"
    return f"{a.lhs} {rel} {a.rhs}"


def format_statement(s: Statement) -> str:
    if not s.quantifiers and not s.atoms:
        return "true"
    out = "exists " + " ".join(str(q) for q in s.quantifiers)
    if s.atoms:
        out = out.rstrip() + " . " + " and ".join(format_atom(a) for a in s.atoms)
    return out


def format_body(statements) -> str:
    if not statements:
        return "false"
    return " | ".join(format_statement(s) for s in statements)


def format_variable(x: StateVariable, controlled: bool) -> str:
    lines = [f"{'controlled' if controlled else 'external'} var {x.name} {{",
             f"  values {', '.join(x.values)};"]
    for v in x.values:
        succ = [w for w in x.values if w in x.transitions[v]]
        lines.append(f"  transitions {v} -> {', '.join(succ)};".replace("-> ;", "->;"))
    for v in x.values:
        lo, hi = x.durations[v]
        if (lo, hi) != (1, INF):
            lines.append(f"  duration {v} [{lo}, {_bound(hi)}];")
    unc = [v for v in x.values if v in x.uncontrollable]
    if unc:
        lines.append(f"  uncontrollable {', '.join(unc)};")
    lines.append("}")
    return "\n".join(lines)


def format_rule(r: Rule, kind: str) -> str:
    if r.trigger is None:
        return f"{kind} goal {r.name}: {format_body(r.statements)};"
    return f"{kind} rule {r.name}: {r.trigger} => {format_body(r.statements)};"


def format_game(game: Game) -> str:
    """Source text that parses back to a structurally identical game.

    A variable with no successor for some value cannot be printed since an
    omitted transition line means "any value"; such games do not arise from
    parsing.
    """
    parts = [format_variable(x, True) for x in game.controlled]
    parts += [format_variable(x, False) for x in game.external]
    parts += [format_rule(r, "system") for r in game.system_rules]
    parts += [format_rule(r, "domain") for r in game.domain_rules]
    return "\n\n".join(parts) + "\n"
