"""Two-player arena built from the game automaton.

Every automaton transition ``q --(A, δ)--> w`` becomes a chain of four
moves.  With ``δ = 1``: Charlie's ending actions, Eve's ending actions,
Charlie's starting actions, Eve's starting actions.  With ``δ > 1`` Charlie
first waits ``δ_C`` for some ``δ <= δ_C <= d``, Eve answers with a timed
play of her ending actions, then both play their starting actions.
Transitions with ``δ > 1`` that contain an end Charlie could play are
pruned: the same plan is read with an empty event followed by a unit one.

Nodes are ``Node(q, phase, delay, actions)``; base nodes have phase
``base`` and carry the automaton state only.
"""
from __future__ import annotations

import hashlib
import json
from collections import deque
from typing import NamedTuple, Sequence

from .automata import GameAutomaton, LiteralState, SyncState, describe_game_state
from .dbm import MatchingStructure
from .model import (CHARLIE, END, EVE, INF, START, Game, Play, Round, TimedPlay, Wait,
                    partition_actions)
from .semantics import BudgetExceeded
from .syntax import desugar_goals

BASE = "base"
AFTER_C_END = "after-c-end"
AFTER_E_END = "after-e-end"
AFTER_C_START = "after-c-start"
AFTER_WAIT = "after-wait"
AFTER_E_TIMED_END = "after-e-timed-end"
AFTER_C_START_WAIT = "after-c-start-wait"

OWNER = {
    BASE: CHARLIE,
    AFTER_C_END: EVE,
    AFTER_E_END: CHARLIE,
    AFTER_C_START: EVE,
    AFTER_WAIT: EVE,
    AFTER_E_TIMED_END: CHARLIE,
    AFTER_C_START_WAIT: EVE,
}

EMPTY = frozenset()


class Node(NamedTuple):
    q: object
    phase: str = BASE
    delay: int = 0
    actions: frozenset = EMPTY

    @property
    def is_base(self) -> bool:
        return self.phase == BASE


class UndefinedMove(Exception):
    def __init__(self, index: int, move, node):
        super().__init__(f"move {index + 1} ({move}) is not available")
        self.index = index
        self.move = move
        self.node = node


def move_key(move) -> str:
    return str(move)


class Arena:
    """Lazily expanded arena of a (desugared) game."""

    def __init__(self, game: Game, d: int | None = None, max_states: int = 200_000,
                 exact: bool = True):
        self.source = game
        self.game = desugar_goals(game)
        self.automaton = GameAutomaton(self.game.variables, self.game.system_rules,
                                       self.game.domain_rules, d, exact)
        self.d = self.automaton.d
        self.max_states = max_states
        self.charlie_actions, self.eve_actions = partition_actions(self.game)
        self.initial = Node(self.automaton.initial)
        self._edges: dict[Node, list] = {}
        self._expanded: set = set()
        self._nodes: set = {self.initial}
        self._touched: set = set()

    # structure ------------------------------------------------------------
    def owner(self, node: Node) -> str:
        return OWNER[node.phase]

    def is_final(self, node: Node) -> bool:
        return node.is_base and self.automaton.is_accepting(node.q)

    def pruned(self, symbol) -> bool:
        """True for symbols removed from the automaton before splitting."""
        actions, delta = symbol
        return delta > 1 and any(a.kind == END and a in self.charlie_actions for a in actions)

    def symbols(self, q) -> list:
        """Defined symbols of the pruned automaton worth splitting."""
        return [s for s in self.automaton.feasible(q) if not self.pruned(s)]

    def _add(self, src, move, dst):
        self._touched.add(src)
        lst = self._edges.setdefault(src, [])
        if (move, dst) not in lst:
            lst.append((move, dst))
        if dst not in self._nodes:
            self._nodes.add(dst)
            if len(self._nodes) > self.max_states:
                raise BudgetExceeded(f"more than {self.max_states} arena states")

    def _expand(self, q):
        if q in self._expanded:
            return
        self._expanded.add(q)
        self._touched = set()
        base = Node(q)
        self._edges.setdefault(base, [])
        ca, ea = self.charlie_actions, self.eve_actions
        for actions, delta in self.symbols(q):
            w = Node(self.automaton.next(q, (actions, delta)))
            c_end = frozenset(a for a in actions if a.kind == END and a in ca)
            e_end = frozenset(a for a in actions if a.kind == END and a in ea)
            c_start = frozenset(a for a in actions if a.kind == START and a in ca)
            e_start = frozenset(a for a in actions if a.kind == START and a in ea)
            if delta == 1:
                n1 = Node(q, AFTER_C_END, 1, c_end)
                n2 = Node(q, AFTER_E_END, 1, c_end | e_end)
                n3 = Node(q, AFTER_C_START, 1, c_end | e_end | c_start)
                self._add(base, Play(c_end), n1)
                self._add(n1, Play(e_end), n2)
                self._add(n2, Play(c_start), n3)
                self._add(n3, Play(e_start), w)
            else:
                nt = Node(q, AFTER_E_TIMED_END, delta, e_end)
                for dc in range(delta, self.d + 1):
                    nw = Node(q, AFTER_WAIT, dc)
                    self._add(base, Wait(dc), nw)
                    self._add(nw, TimedPlay(delta, e_end), nt)
                nc = Node(q, AFTER_C_START_WAIT, delta, e_end | c_start)
                self._add(nt, Play(c_start), nc)
                self._add(nc, Play(e_start), w)
        for node in self._touched:
            self._edges[node].sort(key=lambda e: move_key(e[0]))

    def edges(self, node: Node) -> list:
        """Outgoing ``(move, successor)`` pairs, sorted by move encoding."""
        self._expand(node.q)
        return self._edges.get(node, [])

    def step(self, node: Node, move):
        for m, succ in self.edges(node):
            if m == move:
                return succ
        return None

    def moves(self, node: Node) -> list:
        return [m for m, _ in self.edges(node)]

    def explore(self) -> "ArenaGraph":
        """Expand every reachable node."""
        seen = {self.initial}
        order = [self.initial]
        queue = deque([self.initial])
        while queue:
            node = queue.popleft()
            for _, succ in self.edges(node):
                if succ not in seen:
                    seen.add(succ)
                    order.append(succ)
                    queue.append(succ)
        return ArenaGraph(self, order)

    def read_play(self, moves: Sequence) -> Node:
        """Walk ``moves`` from the initial node; raise :class:`UndefinedMove`."""
        node = self.initial
        for i, mv in enumerate(moves):
            nxt = self.step(node, mv)
            if nxt is None:
                raise UndefinedMove(i, mv, node)
            node = nxt
        return node


class ArenaGraph:
    """A fully explored arena with indexed nodes."""

    def __init__(self, arena: Arena, nodes: list):
        self.arena = arena
        self.nodes = nodes
        self.index = {n: i for i, n in enumerate(nodes)}
        self.succ = [[(m, self.index[s]) for m, s in arena.edges(n)] for n in nodes]
        self.owner = [arena.owner(n) for n in nodes]
        self.final = [arena.is_final(n) for n in nodes]

    def __len__(self):
        return len(self.nodes)

    def edge_count(self) -> int:
        return sum(len(s) for s in self.succ)

    def keys(self) -> list[str]:
        return [node_key(n) for n in self.nodes]

    def to_json(self) -> dict:
        keys = self.keys()
        return {
            "format_version": 1,
            "initial": keys[0],
            "d": self.arena.d,
            "states": [
                {"key": keys[i], "owner": self.owner[i], "final": self.final[i],
                 "phase": n.phase,
                 "edges": [{"move": move_key(m), "target": keys[j]} for m, j in self.succ[i]]}
                for i, n in enumerate(self.nodes)
            ],
        }

    def to_dot(self) -> str:
        lines = ["digraph arena {", "  node [fontsize=10];"]
        for i, n in enumerate(self.nodes):
            shape = "box" if self.owner[i] == CHARLIE else "diamond"
            periph = ", peripheries=2" if self.final[i] else ""
            label = describe_game_state(n.q) if n.is_base else n.phase
            label = label.replace('"', '\\"')
            lines.append(f'  s{i} [shape={shape}{periph}, label="{label}"];')
        for i, succ in enumerate(self.succ):
            for m, j in succ:
                lines.append(f'  s{i} -> s{j} [label="{move_key(m)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Canonical keys


def canonical(obj):
    """JSON-ready structure independent of hash ordering."""
    if isinstance(obj, MatchingStructure):
        return ["ms", list(obj.shape.key), obj.M, obj.age,
                ["inf" if x == INF else x for x in obj.D]]
    if isinstance(obj, (frozenset, set)):
        items = [canonical(x) for x in obj]
        return sorted(items, key=lambda x: json.dumps(x, sort_keys=True))
    if isinstance(obj, (SyncState, LiteralState)):
        return [type(obj).__name__] + [canonical(x) for x in obj]
    if isinstance(obj, Node):
        return [obj.phase, canonical(obj.q), obj.delay, canonical(obj.actions)]
    if isinstance(obj, tuple):
        if hasattr(obj, "kind") and hasattr(obj, "var"):
            return f"{obj.kind}({obj.var},{obj.value})"
        return [canonical(x) for x in obj]
    if obj is None or isinstance(obj, (int, str)):
        return obj
    if obj == INF:
        return "inf"
    raise TypeError(f"no canonical form for {type(obj).__name__}")


def node_key(node: Node) -> str:
    blob = json.dumps(canonical(node), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Plays as move words


def play_moves(rounds: Sequence[Round]) -> list:
    """Move word read by the arena for a play of the game.

    Consecutive starting rounds act on the same event and are merged.  A
    waiting round answered at delay 1 is an empty Charlie play, and every
    ending round is followed by the starting moves of its event, empty when
    the play has none there.
    """
    blocks = []  # ("start", c, e) or ("end", round)
    for r in rounds:
        if r.kind == "starting":
            c = r.charlie.actions
            e = r.eve.actions
            if blocks and blocks[-1][0] == "start":
                _, c0, e0 = blocks[-1]
                blocks[-1] = ("start", c0 | c, e0 | e)
            else:
                blocks.append(("start", c, e))
        else:
            blocks.append(("end", r))
    out = []
    for k, block in enumerate(blocks):
        if block[0] == "start":
            if k == 0:
                out += [Play(EMPTY), Play(EMPTY)]
            out += [Play(block[1]), Play(block[2])]
            continue
        r = block[1]
        if isinstance(r.charlie, Wait):
            if r.eve.delay == 1:
                out += [Play(EMPTY), Play(r.eve.actions)]
            else:
                out += [r.charlie, r.eve]
        else:
            out += [r.charlie, r.eve]
        if k + 1 == len(blocks) or blocks[k + 1][0] != "start":
            out += [Play(EMPTY), Play(EMPTY)]
    return out
