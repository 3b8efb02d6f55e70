"""Command-line entry point: ``tlgames <subcommand> ...``.

Exit codes: 0 success, 1 parse or usage error (also "not a solution" for
``validate``/``accepts``), 2 invalid plan input, 10 Eve wins, 20 budget
exceeded.  Verdicts are printed as one-line JSON on stdout; diagnostics go
to stderr.
"""
from __future__ import annotations

import argparse
import json
import signal
import sys
from contextlib import contextmanager

from .arena import Arena
from .automata import (GameAutomaton, accepts as dfa_accepts, automaton_dot, describe_game_state,
                       explore, symbol_label)
from .dbm import window
from .model import ModelError, is_closed, plan_from_json, validate_event_sequence
from .semantics import (BudgetExceeded, extract_tokens, rules_hold, solution_report,
                        timeline_problems)
from .solver import (EveWins, ScriptError, attractor, interactive_policy, load_strategy,
                     random_policy, scripted_policy, simulate, synthesize)
from .syntax import SpecError, desugar_goals, desugar_plan, load_game

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID_PLAN = 2
EXIT_EVE_WINS = 10
EXIT_BUDGET = 20


class UsageError(Exception):
    pass


def _emit(obj, out):
    print(json.dumps(obj, sort_keys=True, separators=(",", ":")), file=out)


def _write_json(obj, path, out):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        out.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


@contextmanager
def _deadline(seconds):
    """Raise BudgetExceeded after ``seconds`` of wall time (POSIX only)."""
    if not seconds or not hasattr(signal, "SIGALRM"):
        yield
        return

    def fire(signum, frame):
        raise BudgetExceeded(f"more than {seconds} seconds")

    old = signal.signal(signal.SIGALRM, fire)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_check(args, out, err):
    game = load_game(args.spec)
    _emit({"command": "check", "ok": True,
           "controlled": [x.name for x in game.controlled],
           "external": [x.name for x in game.external],
           "system_rules": len(game.system_rules),
           "domain_rules": len(game.domain_rules)}, out)
    return EXIT_OK


def _load_plan(path):
    try:
        return plan_from_json(_read_json(path))
    except (KeyError, TypeError, ValueError, ModelError) as exc:
        raise _InvalidPlan(f"{path}: malformed plan: {exc}") from exc


class _InvalidPlan(Exception):
    pass


def _oracle(game, seq, rules):
    """Semantic verdict ``(ok, reason, invalid)`` for the chosen rule set."""
    if rules == "system":
        rep = solution_report(game.system_problem(), seq)
        return rep.ok, rep.reason, rep.invalid
    if rules == "domain":
        rep = solution_report(game.domain_problem(), seq)
        return rep.ok, rep.reason, rep.invalid
    rep = solution_report(game.system_problem(), seq)
    if rep.invalid:
        return False, rep.reason, True
    tokens = extract_tokens(seq)
    problems = timeline_problems(game.variables, tokens)
    if problems:
        return False, problems[0], False
    if rules_hold(game.system_rules, seq, tokens):
        return True, None, False
    if not rules_hold(game.domain_rules, seq, tokens):
        return True, None, False
    return False, rep.reason, False


def cmd_validate(args, out, err):
    game = load_game(args.spec)
    seq = _load_plan(args.plan)
    ok, reason, invalid = _oracle(game, seq, args.rules)
    _emit({"command": "validate", "rules": args.rules, "solution": ok,
           "invalid": invalid, "reason": reason}, out)
    if invalid:
        print(f"{args.plan}: invalid plan: {reason}", file=err)
        return EXIT_INVALID_PLAN
    if not ok:
        print(f"{args.plan}: not a solution: {reason}", file=err)
    return EXIT_OK if ok else EXIT_ERROR


def _automaton_for(game, rules, d):
    sugared = desugar_goals(game)
    if rules == "system":
        return GameAutomaton(sugared.variables, sugared.system_rules, (), d)
    if rules == "domain":
        return GameAutomaton(sugared.variables, sugared.domain_rules, (), d)
    return GameAutomaton(sugared.variables, sugared.system_rules, sugared.domain_rules, d)


def cmd_accepts(args, out, err):
    game = load_game(args.spec)
    seq = _load_plan(args.plan)
    bad = validate_event_sequence(seq, game.variables)
    if bad is None and not is_closed(seq):
        bad = "the sequence is not closed"
    if bad is not None:
        _emit({"command": "accepts", "rules": args.rules, "accepted": False,
               "invalid": True, "reason": str(bad)}, out)
        print(f"{args.plan}: invalid plan: {bad}", file=err)
        return EXIT_INVALID_PLAN
    # the alphabet must cover every gap of the plan
    d = max([ev.delay for ev in seq[1:]], default=1)
    dfa = _automaton_for(game, args.rules, None)
    dfa = _automaton_for(game, args.rules, max(d, dfa.d))
    ok = dfa_accepts(dfa, desugar_plan(game, seq))
    _emit({"command": "accepts", "rules": args.rules, "accepted": ok, "invalid": False,
           "d": dfa.d}, out)
    return EXIT_OK if ok else EXIT_ERROR


def cmd_synth(args, out, err):
    game = load_game(args.spec)
    syn = synthesize(game, max_states=args.max_states, d=args.d)
    verdict = {"command": "synth", "charlie_wins": syn.charlie_wins, "d": syn.arena.d,
               "arena_states": len(syn.graph), "arena_edges": syn.graph.edge_count(),
               "attractor_rounds": syn.attr.rounds}
    if syn.strategy is not None and args.output:
        _write_json(syn.strategy.to_json(), args.output, out)
        verdict["strategy"] = args.output
    _emit(verdict, out if args.output != "-" else err)
    return EXIT_OK if syn.charlie_wins else EXIT_EVE_WINS


def _policy(args, out):
    chosen = [args.script is not None, args.seed is not None, args.interactive]
    if sum(chosen) > 1:
        raise UsageError("choose at most one of --script, --seed, --interactive")
    if args.script is not None:
        data = _read_json(args.script)
        moves = data["moves"] if isinstance(data, dict) else data
        try:
            return scripted_policy(moves)
        except ValueError as exc:
            raise UsageError(f"{args.script}: {exc}") from exc
    if args.interactive:
        return interactive_policy(sys.stdin, out)
    return random_policy(args.seed if args.seed is not None else 0)


def cmd_simulate(args, out, err):
    game = load_game(args.spec)
    strategy = load_strategy(args.strategy)
    d = strategy.metadata.get("d")
    arena = Arena(game, d=d, max_states=args.max_states)
    policy = _policy(args, out)
    try:
        transcript = simulate(arena, strategy, policy, args.horizon)
    except ScriptError as exc:
        raise UsageError(str(exc)) from exc
    if args.transcript:
        _write_json(transcript.to_json(), args.transcript, out)
    _emit({"command": "simulate", "verdict": transcript.verdict, "detail": transcript.detail,
           "pairs": len(transcript.moves), "state": transcript.final_key}, out)
    return EXIT_OK


def cmd_export(args, out, err):
    game = load_game(args.spec)
    if args.what == "arena":
        arena = Arena(game, d=args.d, max_states=args.max_states)
        graph = arena.explore()
        if args.format == "dot":
            text = graph.to_dot()
        else:
            text = json.dumps(graph.to_json(), sort_keys=True, indent=2) + "\n"
    else:
        dfa = _automaton_for(game, "game", args.d)
        ex = explore(dfa, dfa.feasible, max_states=args.max_states)
        if args.format == "dot":
            text = automaton_dot(dfa, ex, describe_game_state)
        else:
            text = json.dumps({
                "format_version": 1, "d": dfa.d,
                "states": [{"index": i, "label": describe_game_state(q),
                            "accepting": dfa.is_accepting(q)}
                           for i, q in enumerate(ex.states)],
                "edges": [{"source": s, "symbol": symbol_label(sym), "target": t}
                          for s, sym, t in ex.edges],
            }, sort_keys=True, indent=2) + "\n"
    if args.output in (None, "-"):
        out.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_stats(args, out, err):
    game = load_game(args.spec)
    arena = Arena(game, d=args.d, max_states=args.max_states)
    graph = arena.explore()
    attr = attractor(graph)
    sugared = arena.game
    _emit({"command": "stats", "d": arena.d,
           "window_system": window(sugared.system_rules),
           "window_domain": window(sugared.domain_rules),
           "automaton_states": arena.automaton.cache_size(),
           "arena_states": len(graph), "arena_edges": graph.edge_count(),
           "charlie_wins": attr.win[0], "attractor_rounds": attr.rounds}, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _positive(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tlgames", description="Timeline-based game controller synthesis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, budget=True, with_d=False):
        sp.add_argument("spec", help="game specification (.tg)")
        if budget:
            sp.add_argument("--max-states", type=_positive, default=200_000,
                            help="exploration cap (default 200000)")
            sp.add_argument("--max-seconds", type=_positive_float, default=None,
                            help="wall-clock cap")
        if with_d:
            sp.add_argument("--d", type=_positive, default=None,
                            help="largest wait (default: from the rules)")

    sp = sub.add_parser("check", help="parse and run static checks")
    common(sp, budget=False)
    sp.set_defaults(func=cmd_check)

    for name, func, text in (("validate", cmd_validate, "semantic verdict on a plan"),
                             ("accepts", cmd_accepts, "automaton verdict on a plan")):
        sp = sub.add_parser(name, help=text)
        common(sp, budget=False)
        sp.add_argument("plan", help="plan JSON")
        sp.add_argument("--rules", choices=("system", "domain", "game"), default="system",
                        help="system rules, domain rules, or the game objective")
        sp.set_defaults(func=func)

    sp = sub.add_parser("synth", help="solve the game and export a strategy")
    common(sp, with_d=True)
    sp.add_argument("-o", "--output", help="strategy JSON path ('-' for stdout)")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("simulate", help="play a strategy against Eve")
    common(sp)
    sp.add_argument("strategy", help="strategy JSON from synth")
    sp.add_argument("--script", help="JSON list of Eve moves")
    sp.add_argument("--seed", type=int, help="random Eve with this seed")
    sp.add_argument("--interactive", action="store_true", help="read Eve moves from stdin")
    sp.add_argument("--horizon", type=_positive, default=50, help="move pairs (default 50)")
    sp.add_argument("--transcript", help="write the transcript JSON here")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("export", help="export the automaton or the arena")
    common(sp, with_d=True)
    sp.add_argument("--what", choices=("automaton", "arena"), default="arena")
    sp.add_argument("--format", choices=("dot", "json"), default="dot")
    sp.add_argument("-o", "--output", help="output path (default stdout)")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("stats", help="sizes of the automaton and the arena")
    common(sp, with_d=True)
    sp.set_defaults(func=cmd_stats)
    return p


def run_cli(argv, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_ERROR
    try:
        with _deadline(getattr(args, "max_seconds", None)):
            return args.func(args, out, err)
    except SpecError as exc:
        for d in exc.diagnostics:
            print(d, file=err)
        return EXIT_ERROR
    except _InvalidPlan as exc:
        print(exc, file=err)
        return EXIT_INVALID_PLAN
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=err)
        _emit({"command": args.command, "budget_exceeded": True, "reason": str(exc)}, out)
        return EXIT_BUDGET
    except (UsageError, OSError, ValueError, KeyError, EveWins) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_ERROR


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
