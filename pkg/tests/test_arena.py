import json
import random

import pytest

from generators import random_game
from oracles import check_plays, success
from tlgames.arena import (AFTER_C_START_WAIT, AFTER_E_TIMED_END, AFTER_WAIT, BASE, OWNER,
                           Arena, Node, UndefinedMove, node_key, play_moves)
from tlgames.model import (CHARLIE, EVE, Event, Play, Round, TimedPlay, Wait, end, normalize_gaps,
                           start)
from tlgames.syntax import parse_or_raise

CHAIN = """
controlled var x { values v1, v2; uncontrollable v1; }
external var y { values w1, w2; uncontrollable w1; }
system rule r: a[x = v2] => exists . start(a) <=[0, 9] end(a);
"""

EMPTY = frozenset()


def fs(*actions):
    return frozenset(actions)


def opening():
    return [Play(EMPTY), Play(EMPTY), Play(fs(start("x", "v1"))), Play(fs(start("y", "w1")))]


def test_transition_chain():
    arena = Arena(parse_or_raise(CHAIN))
    assert arena.d == 10
    q = arena.read_play(opening())
    assert q.is_base
    ends = fs(end("x", "v1"), end("y", "w1"))
    symbol = (ends | fs(start("x", "v2"), start("y", "w2")), 5)
    assert symbol in arena.symbols(q.q)
    w = Node(arena.automaton.next(q.q, symbol))
    waits = [m for m in arena.moves(q) if isinstance(m, Wait)]
    assert {m.delay for m in waits} >= set(range(5, 11))
    for dc in range(5, 11):
        nw = arena.step(q, Wait(dc))
        assert nw.phase == AFTER_WAIT and arena.owner(nw) == EVE
        nt = arena.step(nw, TimedPlay(5, ends))
        assert nt.phase == AFTER_E_TIMED_END and arena.owner(nt) == CHARLIE
        nc = arena.step(nt, Play(fs(start("x", "v2"))))
        assert nc.phase == AFTER_C_START_WAIT
        assert arena.step(nc, Play(fs(start("y", "w2")))) == w
    # Eve cannot answer a wait with a longer timed play
    assert arena.step(arena.step(q, Wait(4)), TimedPlay(5, ends)) is None


def test_pruning_of_charlie_ends_after_long_gaps():
    game = parse_or_raise("controlled var x { values v; }\nexternal var y { values w; }")
    arena = Arena(game, d=5)
    assert arena.pruned((fs(end("x", "v")), 5))
    assert not arena.pruned((EMPTY, 5))
    assert not arena.pruned((fs(end("x", "v")), 1))
    q = arena.read_play([Play(EMPTY), Play(EMPTY), Play(fs(start("x", "v"))),
                         Play(fs(start("y", "w")))])
    for actions, delta in arena.symbols(q.q):
        assert delta == 1 or end("x", "v") not in actions


def test_owners():
    assert OWNER[BASE] == CHARLIE
    assert sorted(set(OWNER.values())) == [CHARLIE, EVE]


def test_read_play_empty_and_undefined():
    arena = Arena(parse_or_raise(CHAIN))
    assert arena.read_play([]) == arena.initial
    with pytest.raises(UndefinedMove) as info:
        arena.read_play([Play(EMPTY), Play(fs(start("x", "v1")))])
    assert info.value.index == 1


def test_play_moves_encoding():
    r1 = Round(Play(fs(start("x", "v1"))), Play(EMPTY))
    r2 = Round(Play(EMPTY), Play(fs(start("y", "w1"))))
    r3 = Round(Wait(3), TimedPlay(1, fs(end("y", "w1"))))
    moves = play_moves([r1, r2, r3])
    assert moves == [Play(EMPTY), Play(EMPTY), Play(fs(start("x", "v1"))),
                     Play(fs(start("y", "w1"))), Play(EMPTY), Play(fs(end("y", "w1"))),
                     Play(EMPTY), Play(EMPTY)]
    assert play_moves([]) == []


def test_node_keys_are_stable():
    keys = []
    for _ in range(2):
        arena = Arena(parse_or_raise(CHAIN))
        keys.append(arena.explore().keys())
    assert keys[0] == keys[1]
    assert len(set(keys[0])) == len(keys[0])
    assert len(node_key(Arena(parse_or_raise(CHAIN)).initial)) == 16


def test_graph_exports():
    game = parse_or_raise("controlled var x { values p; }\nexternal var y { values a; }")
    graph = Arena(game).explore()
    data = graph.to_json()
    assert data["format_version"] == 1
    assert len(data["states"]) == len(graph)
    assert json.loads(json.dumps(data)) == data
    dot = graph.to_dot()
    assert dot.count(" -> ") == graph.edge_count()
    assert "peripheries=2" in dot


def test_edges_sorted_by_move():
    graph = Arena(parse_or_raise(CHAIN)).explore()
    for succ in graph.succ:
        labels = [str(m) for m, _ in succ]
        assert labels == sorted(labels)


def test_plays_agree_with_outcomes():
    rng = random.Random(2)
    for _ in range(6):
        game = random_game(rng, max_const=1)
        arena = Arena(game)

        def on_play(rounds, seq, node):
            reached = node is not None and arena.is_final(node)
            assert reached == success(arena.game, seq), (rounds, seq)
            if node is not None:
                try:
                    assert arena.read_play(play_moves(rounds)) == node
                except UndefinedMove:
                    pytest.fail("incremental and batch readings differ")

        check_plays(arena.game, arena, 5, arena.d, on_play)


def test_outcomes_survive_gap_normalization():
    game = parse_or_raise("controlled var x { values p; }\nexternal var y { values a; }")
    seq = (Event(fs(start("x", "p"), start("y", "a")), 0),
           Event(fs(end("x", "p"), end("y", "a")), 7))
    assert success(game, seq) == success(game, normalize_gaps(seq, 2))


def test_plays_agree_with_outcomes_larger_constants():
    rng = random.Random(12)
    for _ in range(12):
        game = random_game(rng, max_const=2)
        arena = Arena(game)

        def on_play(rounds, seq, node):
            reached = node is not None and arena.is_final(node)
            assert reached == success(arena.game, seq), (rounds, seq)

        check_plays(arena.game, arena, 5, arena.d, on_play)
