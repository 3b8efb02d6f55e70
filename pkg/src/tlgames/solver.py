"""Reachability game solving and controller execution."""
from __future__ import annotations

import hashlib
import json
import random
import re
import sys
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .arena import (EMPTY, Arena, ArenaGraph, Node, UndefinedMove, move_key, node_key)
from .dbm import window
from .model import CHARLIE, EVE, Action, Event, Game, Play, TimedPlay, Wait, plan_to_json
from .syntax import desugar_goals, format_game, project_plan

STRATEGY_FORMAT_VERSION = 1


class EveWins(Exception):
    """No winning strategy for Charlie exists from the initial state."""


@dataclass
class AttractorResult:
    win: list  # bool per node index
    level: dict  # node index -> least i with the node in Attr^i
    rounds: int  # index at which the chain became stationary

    def winning(self, i: int) -> bool:
        return self.win[i]


def attractor(graph: ArenaGraph) -> AttractorResult:
    """Charlie's attractor of the final nodes, by backward propagation.

    Eve nodes keep a counter of successors not yet known to be winning;
    nodes are settled in order of level, so the level of a Charlie node is
    one more than its best successor and that of an Eve node one more than
    its worst.
    """
    n = len(graph)
    preds = [[] for _ in range(n)]
    for i, succ in enumerate(graph.succ):
        for _, j in succ:
            preds[j].append(i)
    remaining = [len({j for _, j in s}) for s in graph.succ]
    level = {}
    frontier = [i for i in range(n) if graph.final[i]]
    for i in frontier:
        level[i] = 0
    late = [i for i in range(n) if not graph.final[i] and graph.owner[i] == EVE
            and not graph.succ[i]]
    k = 0
    while frontier or late:
        nxt = []
        if k == 0:
            # Eve nodes without moves satisfy the universal clause vacuously
            for i in late:
                level[i] = 1
                nxt.append(i)
            late = []
        for j in frontier:
            for i in set(preds[j]):
                if i in level:
                    continue
                if graph.owner[i] == CHARLIE:
                    level[i] = k + 1
                    nxt.append(i)
                else:
                    remaining[i] -= 1
                    if remaining[i] == 0:
                        level[i] = k + 1
                        nxt.append(i)
        frontier = nxt
        k += 1
    rounds = max(level.values(), default=0)
    return AttractorResult([i in level for i in range(n)], level, rounds)


def naive_attractor(graph: ArenaGraph) -> list[set]:
    """The chain ``Attr^0, Attr^1, ...`` up to stationarity, by rescanning."""
    n = len(graph)
    current = {i for i in range(n) if graph.final[i]}
    chain = [set(current)]
    while True:
        nxt = set(current)
        for i in range(n):
            if i in current:
                continue
            targets = [j for _, j in graph.succ[i]]
            if graph.owner[i] == CHARLIE:
                if any(j in current for j in targets):
                    nxt.add(i)
            elif all(j in current for j in targets):
                nxt.add(i)
        if nxt == current:
            return chain
        chain.append(nxt)
        current = nxt


@dataclass
class Strategy:
    """Positional strategy over arena nodes, keyed by canonical node keys."""

    moves: dict  # node key -> move
    levels: dict  # node key -> level, for every winning node
    initial: str
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "format_version": STRATEGY_FORMAT_VERSION,
            "metadata": self.metadata,
            "initial": self.initial,
            "strategy": {k: move_key(self.moves[k]) for k in sorted(self.moves)},
            "levels": {k: self.levels[k] for k in sorted(self.levels)},
        }

    @classmethod
    def from_json(cls, data: dict) -> "Strategy":
        if data.get("format_version") != STRATEGY_FORMAT_VERSION:
            raise ValueError(f"unsupported strategy format {data.get('format_version')!r}")
        moves = {k: parse_move(v) for k, v in data["strategy"].items()}
        return cls(moves, dict(data["levels"]), data["initial"], dict(data.get("metadata", {})))


def positional_strategy(graph: ArenaGraph, attr: AttractorResult) -> dict:
    """Move per winning Charlie node outside the target.

    Ties are broken by successor level, then by the move encoding.
    """
    out = {}
    for i, node in enumerate(graph.nodes):
        if graph.owner[i] != CHARLIE or not attr.win[i] or graph.final[i]:
            continue
        best = None
        for m, j in graph.succ[i]:
            if not attr.win[j]:
                continue
            cand = (attr.level[j], move_key(m))
            if best is None or cand < best[0]:
                best = (cand, m)
        out[i] = best[1]
    return out


def game_hash(game: Game) -> str:
    return hashlib.sha256(format_game(game).encode()).hexdigest()


@dataclass
class Synthesis:
    arena: Arena
    graph: ArenaGraph
    attr: AttractorResult
    strategy: Strategy | None

    @property
    def charlie_wins(self) -> bool:
        return self.attr.win[0]


def synthesize(game: Game, max_states: int = 200_000, d: int | None = None) -> Synthesis:
    """Full pipeline; ``strategy`` is None when Eve wins."""
    game = desugar_goals(game)
    arena = Arena(game, d=d, max_states=max_states)
    graph = arena.explore()
    attr = attractor(graph)
    strategy = None
    if attr.win[0]:
        keys = graph.keys()
        chosen = positional_strategy(graph, attr)
        strategy = Strategy(
            {keys[i]: m for i, m in chosen.items()},
            {keys[i]: lv for i, lv in attr.level.items()},
            keys[0],
            {"game_sha256": game_hash(game), "d": arena.d,
             "window_system": window(game.system_rules),
             "window_domain": window(game.domain_rules),
             "arena_states": len(graph), "arena_edges": graph.edge_count()})
    return Synthesis(arena, graph, attr, strategy)


# ---------------------------------------------------------------------------
# Moves as text

_ACTION_RE = re.compile(r"(start|end)\(([^,()]+),([^,()]+)\)")


def _parse_actions(text: str) -> frozenset:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise ValueError(f"bad action set {text!r}")
    body = text[1:-1].replace(" ", "")
    if not body:
        return EMPTY
    acts = _ACTION_RE.findall(body)
    if ",".join(f"{k}({x},{v})" for k, x, v in acts) != body:
        raise ValueError(f"bad action set {text!r}")
    return frozenset(Action(k, x, v) for k, x, v in acts)


def parse_move(text: str):
    """Inverse of ``str(move)``."""
    t = text.strip()
    m = re.fullmatch(r"wait\((\d+)\)", t)
    if m:
        return Wait(int(m.group(1)))
    m = re.fullmatch(r"play\((\d+),(\{.*\})\)", t)
    if m:
        return TimedPlay(int(m.group(1)), _parse_actions(m.group(2)))
    m = re.fullmatch(r"play\((\{.*\})\)", t)
    if m:
        return Play(_parse_actions(m.group(1)))
    raise ValueError(f"cannot read move {text!r}")


# ---------------------------------------------------------------------------
# Controller and simulation


class ScriptError(Exception):
    def __init__(self, index: int, move, legal):
        super().__init__(f"scripted Eve move {index + 1} ({move}) is not applicable; "
                         f"legal: {', '.join(move_key(m) for m in legal)}")
        self.index = index


class Controller:
    """Strategy plus a cursor on the arena node reached so far."""

    def __init__(self, arena: Arena, strategy: Strategy):
        self.arena = arena
        self.strategy = strategy
        self.cursor: Node = arena.initial
        self.plan: list[Event] = []
        self._chain: list = []

    def key(self) -> str:
        return node_key(self.cursor)

    def choose(self):
        """Charlie's move at the cursor, or None if the strategy has none."""
        move = self.strategy.moves.get(self.key())
        if move is None or self.arena.step(self.cursor, move) is None:
            return None
        return move

    def advance(self, move):
        nxt = self.arena.step(self.cursor, move)
        if nxt is None:
            raise UndefinedMove(0, move, self.cursor)
        self._chain.append(move)
        self.cursor = nxt
        if len(self._chain) == 2:
            self._ending_pair(*self._chain)
        elif len(self._chain) == 4:
            self._starting_pair(*self._chain[2:])
            self._chain = []

    def _ending_pair(self, c, e):
        acts = (frozenset() if isinstance(c, Wait) else c.actions) | e.actions
        delay = e.delay if isinstance(e, TimedPlay) else 1
        if self.plan:
            self.plan.append(Event(acts, delay))

    def _starting_pair(self, c, e):
        acts = c.actions | e.actions
        if self.plan:
            last = self.plan[-1]
            self.plan[-1] = Event(last.actions | acts, last.delay)
        else:
            self.plan.append(Event(acts, 0))


@dataclass
class Transcript:
    moves: list  # (charlie move, eve move) pairs
    plan: list
    verdict: str
    final_key: str
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "moves": [{"charlie": move_key(c), "eve": move_key(e)} for c, e in self.moves],
            "plan": plan_to_json(self.plan),
            "verdict": self.verdict,
            "detail": self.detail,
            "state": self.final_key,
        }


SUCCESS = "success"
UNFINISHED = "admissible-but-unfinished"
INADMISSIBLE = "eve-inadmissible"
STUCK = "charlie-stuck"


def scripted_policy(moves: Sequence) -> Callable:
    moves = [parse_move(m) if isinstance(m, str) else m for m in moves]
    state = {"i": 0}

    def policy(legal, controller):
        i = state["i"]
        if i >= len(moves):
            return None
        state["i"] += 1
        if moves[i] not in legal:
            raise ScriptError(i, moves[i], legal)
        return moves[i]

    return policy


def random_policy(seed: int) -> Callable:
    rng = random.Random(seed)

    def policy(legal, controller):
        return rng.choice(legal)

    return policy


def interactive_policy(stdin=None, stdout=None) -> Callable:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    def show_plan(controller):
        print("partial plan:", " ".join(str(ev) for ev in controller.plan) or "(empty)",
              file=stdout)

    def policy(legal, controller):
        show_plan(controller)
        for i, m in enumerate(legal):
            print(f"  [{i}] {move_key(m)}", file=stdout)
        while True:
            print("eve> ", end="", file=stdout, flush=True)
            line = stdin.readline()
            if not line:
                return None
            line = line.strip()
            if line == "?":
                show_plan(controller)
                continue
            if line.isdigit() and int(line) < len(legal):
                return legal[int(line)]
            print(f"enter a number between 0 and {len(legal) - 1}, or ? for the plan",
                  file=stdout)

    return policy


def simulate(arena: Arena, strategy: Strategy, eve_policy: Callable, horizon: int,
             on_move: Callable | None = None) -> Transcript:
    """Play the strategy against ``eve_policy`` for at most ``horizon`` move pairs.

    ``eve_policy(legal_moves, controller)`` returns one of ``legal_moves``
    or None to stop early (an exhausted script or closed input).
    """
    ctl = Controller(arena, strategy)
    pairs = []

    def done(verdict, detail=""):
        plan = list(project_plan(arena.source, ctl.plan))
        return Transcript(pairs, plan, verdict, ctl.key(), detail)

    for _ in range(horizon + 1):
        node = ctl.cursor
        if arena.is_final(node):
            return done(SUCCESS)
        if node.is_base and arena.automaton.domain_failed(node.q):
            return done(INADMISSIBLE, "the plan violates the domain rules")
        if len(pairs) == horizon:
            break
        c = ctl.choose()
        if c is None:
            return done(STUCK, "no strategy move at this state")
        ctl.advance(c)
        legal = arena.moves(ctl.cursor)
        if not legal:
            return done(STUCK, "Eve has no move")
        e = eve_policy(legal, ctl)
        if e is None:
            break
        ctl.advance(e)
        pairs.append((c, e))
        if on_move:
            on_move(c, e, ctl)
    return done(UNFINISHED)


def load_strategy(path) -> Strategy:
    with open(path, encoding="utf-8") as fh:
        return Strategy.from_json(json.load(fh))
