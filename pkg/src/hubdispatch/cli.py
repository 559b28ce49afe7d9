"""Command line: generate, train, evaluate, transfer, oracle, report.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 a requested
acceptance check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment, harness, report, tiny
from .datagen import GroupFileError
from .env import DisruptionEnv
from .scenario import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("hubdispatch")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.training.seed = args.seed
        cfg.evaluation.seed = args.seed
    if getattr(args, "episodes", None) is not None:
        cfg.training.episodes = args.episodes
        cfg.evaluation.episodes = args.episodes
    return cfg


def _print_checks(checks) -> int:
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


def cmd_generate(args) -> int:
    cfg = _config(args)
    m = experiment.generate(cfg, Path(args.out))
    print(f"{m['groups']} groups, disrupted demand {m['disrupted_demand']}, background {m['background_demand']} -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    every = max(1, cfg.training.episodes // 20)

    def progress(ep, s):
        if ep % every == every - 1 or ep == cfg.training.episodes - 1:
            log.info("episode %d eps %.3f reward %.1f satisfied %.3f", ep + 1, s["epsilon"], s["total_reward"], s["satisfied_fraction"])

    with experiment.Timer() as tm:
        res = experiment.train_run(cfg, out, progress)
    print(f"trained {len(res.summaries)} episodes in {tm.seconds:.1f}s -> {out / 'model.bin'}")
    if args.check:
        base = experiment.baseline_stats(cfg)
        return _print_checks(experiment.convergence_checks(res.summaries, base, cfg.rewards.crowd_threshold))
    return EXIT_OK


def _evaluate(args, transfer: bool) -> int:
    cfg = _config(args)
    model = Path(args.model) if args.model else None
    with experiment.Timer() as tm:
        stats = experiment.evaluate_run(cfg, Path(args.out) if args.out else None, args.policy, model,
                                        args.episodes, args.epsilon, transfer, args.seed)
    print(json.dumps({"n": stats.n, "mean": stats.mean, "max": stats.max}, indent=2, sort_keys=True))
    print(f"{stats.n} episodes in {tm.seconds:.1f}s")
    if transfer and args.check:
        if not args.train_run:
            raise ConfigError("--check needs --train-run to compare against the training final window")
        sums = experiment.read_summaries(Path(args.train_run) / "summaries.jsonl")
        return _print_checks(experiment.transfer_checks(stats, experiment.final_window_satisfaction(sums),
                                                        cfg.rewards.crowd_threshold))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    return _evaluate(args, transfer=False)


def cmd_transfer(args) -> int:
    return _evaluate(args, transfer=True)


def cmd_oracle(args) -> int:
    env = DisruptionEnv(tiny.tiny_scenario(args.scenario))
    if args.sequence is not None:
        seq = [int(x) for x in args.sequence.split(",") if x.strip()]
        a, b = harness.oracle_value(env, seq), harness.sequence_value(env, seq)
        print(f"oracle {a!r} harness {b!r}")
        return EXIT_OK if a == b else EXIT_CHECK
    try:
        seq, val = harness.oracle_search(env)
    except harness.SearchTooLarge as exc:
        print(exc, file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"scenario": args.scenario, "sequence": list(seq), "total_reward": val}))
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run)
    if not run.is_dir():
        raise ConfigError(f"run directory {run} does not exist")
    for p in report.build_report(run, Path(args.out), plots=args.plots):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hubdispatch", description="Demand-responsive train dispatching at a disrupted hub.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True, episodes=True):
        sp.add_argument("--config", help="YAML run configuration (defaults built in)")
        if seed:
            sp.add_argument("--seed", type=int)
        if episodes:
            sp.add_argument("--episodes", type=int)

    sp = sub.add_parser("generate", help="write synthetic passenger groups")
    common(sp, episodes=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="train the two-step agent")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--check", action="store_true", help="run the convergence checks afterwards")
    sp.set_defaults(func=cmd_train)

    for name, func, help_ in (("evaluate", cmd_evaluate, "frozen-policy evaluation on the training scenario"),
                              ("transfer", cmd_transfer, "frozen-policy evaluation at the transfer demand")):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.add_argument("--model")
        sp.add_argument("--policy", default="dqn", choices=["dqn", "random", "greedy", "horizon", "null"])
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--out")
        if name == "transfer":
            sp.add_argument("--check", action="store_true", help="run the transfer checks")
            sp.add_argument("--train-run", help="training run directory, for the satisfaction comparison")
        sp.set_defaults(func=func)

    sp = sub.add_parser("oracle", help="exhaustive search on a tiny scenario")
    sp.add_argument("--scenario", default="one-train", choices=sorted(tiny.TINY))
    sp.add_argument("--sequence", help="comma-separated actions to evaluate instead (0 stay, 1+p plan p)")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("report", help="tables (and plots) from a run directory")
    sp.add_argument("--run", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--plots", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, GroupFileError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
