"""
Command-line harness for the language-guided exploration lab.

Usage:
    lge gen-suite
    lge train-guide --set guide.epochs=5
    lge eval-guide
    lge train-agent --mode lge-fix --deterministic
    lge eval-agent --mode lge-fix
    lge report runs/desk-1a2b3c4d runs/desk-5e6f7a8b
    lge selftest
    lge pipeline --modes drrn lge-fix

Exit codes: 0 ok, 1 usage or config error, 2 runtime failure, 3 selftest failure.
"""

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

import torch
from pydantic import ValidationError

from config.experiment import ConfigError, ExperimentConfig, load_config
from config.settings import DETERMINISTIC, LOG_DATEFMT, LOG_FORMAT, LOG_LEVEL, get_config_summary
from orchestrator.lge import MODES, default_mode
from orchestrator.state_manager import RunDirectory

logger = logging.getLogger("lge")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_SELFTEST = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lge", description="Language-guided exploration lab")
    parser.add_argument("--config", help="experiment YAML (default: config/default.yaml)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value; flags win over the file")
    parser.add_argument("--run-dir", help="run directory (default: <output root>/<name>-<config hash>)")
    parser.add_argument("--deterministic", action="store_true", default=DETERMINISTIC,
                        help="single rollout worker and single-threaded torch")
    parser.add_argument("--log-level", default=LOG_LEVEL)

    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    commands.add_parser("gen-suite", help="generate worlds, gold trajectories and splits")
    commands.add_parser("train-guide", help="train the Guide on the training split")
    eval_guide = commands.add_parser("eval-guide", help="Guide metrics against the gold baselines")
    eval_guide.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    for name in ("train-agent", "eval-agent"):
        sub = commands.add_parser(name, help=f"{name.split('-')[0]} Explorers for one mode")
        sub.add_argument("--mode", choices=MODES, help="default follows lge.epsilon.kind")
        sub.add_argument("--task-types", type=int, nargs="+")
    report = commands.add_parser("report", help="merge runs into return tables")
    report.add_argument("run_dirs", nargs="*", help="run directories (default: this config's run)")
    report.add_argument("--out", help="output directory (default: <first run>/reports)")
    commands.add_parser("selftest", help="gradient checks, metric oracles and planner validity")
    acceptance = commands.add_parser("acceptance", help="retrain and check the Guide and LGE claims (slow)")
    acceptance.add_argument("--guide-seeds", type=int, nargs="+", default=[0, 1, 2])
    acceptance.add_argument("--agent-seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    acceptance.add_argument("--task-types", type=int, nargs="+")
    acceptance.add_argument("--skip-agents", action="store_true", help="Guide claims only")
    pipeline = commands.add_parser("pipeline", help="every stage, resumable")
    pipeline.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, datefmt=LOG_DATEFMT)


def make_deterministic() -> None:
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


#########################################
# Dispatch
#########################################

def run(subcommand: str, config: ExperimentConfig, args: argparse.Namespace) -> int:
    """
    Execute one subcommand against a validated config.

    Returns:
        Exit status
    """
    from evals.acceptance import run_selftest
    from orchestrator import experiment
    from orchestrator.workflow import execute_pipeline

    if subcommand == "selftest":
        results = run_selftest(config)
        for result in results:
            print(result)
        return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST

    if subcommand == "acceptance":
        results = experiment.measure_guide_claims(config, args.guide_seeds)
        if not args.skip_agents:
            results.append(experiment.measure_lge_claim(config, args.agent_seeds, args.task_types))
        for result in results:
            print(result)
        return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST

    run_dir = RunDirectory.for_config(config, args.run_dir)

    if subcommand == "report":
        run_dirs = args.run_dirs or [str(run_dir.root)]
        out = args.out or str(RunDirectory(run_dirs[0], config).reports_dir)
        for path in experiment.run_report(run_dirs, out):
            print(path)
        return EXIT_OK

    run_dir.prepare()
    mode = getattr(args, "mode", None) or default_mode(config)

    if subcommand == "gen-suite":
        summary = experiment.run_gen_suite(run_dir)
        print(json.dumps(summary, sort_keys=True))
    elif subcommand == "train-guide":
        history = experiment.run_train_guide(run_dir)
        print(json.dumps(history, sort_keys=True))
    elif subcommand == "eval-guide":
        experiment.run_eval_guide(run_dir, args.split)
        print((run_dir.guide_dir / "guide_metrics.txt").read_text(encoding="utf-8"), end="")
    elif subcommand == "train-agent":
        results = experiment.run_train_agent(run_dir, mode, args.task_types, args.deterministic)
        for task_type, result in results.items():
            print(f"t{task_type} {mode}: {result.steps} steps, final score {result.final_score:.3f}")
    elif subcommand == "eval-agent":
        summaries = experiment.run_eval_agent(run_dir, mode, args.task_types, args.deterministic)
        for task_type, summary in summaries.items():
            print(f"t{task_type} {mode}: final score {summary['final_score']:.3f}")
    elif subcommand == "pipeline":
        state = execute_pipeline(run_dir, args.modes, args.deterministic)
        print(json.dumps({"stage": state["current_stage"], "reports": state["report_paths"]}, sort_keys=True))
    else:
        raise UsageError(f"unknown subcommand: {subcommand}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    configure_logging(args.log_level)
    if args.deterministic:
        make_deterministic()
    logger.debug(f"settings: {get_config_summary()}")

    try:
        config = load_config(args.config, args.overrides)
    except ConfigError as e:
        for line in e.diagnostics:
            print(line, file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    try:
        return run(args.command, config, args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.warning("interrupted; rerun the same command to resume from the last checkpoint")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=logging.getLogger().isEnabledFor(logging.DEBUG))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
