"""Timeline-based games: rules, automata, arenas and strategy synthesis."""
from .model import (Action, Event, Game, Play, Problem, Round, StateVariable, TimedPlay, Wait,
                    end, start)
from .solver import Strategy, synthesize
from .syntax import SpecError, load_game, parse_game

__all__ = [
    "Action", "Event", "Game", "Play", "Problem", "Round", "SpecError", "StateVariable",
    "Strategy", "TimedPlay", "Wait", "end", "load_game", "parse_game", "start", "synthesize",
]
