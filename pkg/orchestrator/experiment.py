"""
Experiment pipeline using LangGraph.
Stages: gen-suite → train-guide → eval-guide → train-agent → eval-agent → report

Every stage is also callable on its own; the CLI subcommands use them directly.
"""

import json
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from langgraph.graph import END, StateGraph

from agents.explorer import Explorer
from agents.factory import BASELINE_KINDS, get_baseline, get_scorer
from agents.guide import Guide, GuideDataset, train_guide, write_tuples
from agents.textcodec import Vocabulary, build_vocab
from config.experiment import ExperimentConfig
from config.settings import DETERMINISTIC, get_dtype
from environment.planner import replay
from environment.suite import Suite
from evals.acceptance import CheckResult, guide_claims, guide_generalization, lge_claim
from evals.metrics import (
    REPORT_KS,
    MetricRow,
    aggregate_report,
    collect_steps,
    distractor_win_rate,
    mean_action_count,
)
from evals.report import emit_report, write_guide_report
from orchestrator.evaluation import GreedyPolicy, evaluate_both, pick_eval_envs
from orchestrator.lge import MODES, LGEConfig, LGEResult, SeedStreams, final_score, train_lge
from orchestrator.state_manager import RunDirectory, load_snapshot, log_state_transition, read_jsonl
from orchestrator.states import PipelineState

logger = logging.getLogger(__name__)

_SUITES: Dict[str, Suite] = {}


#########################################
# Shared artifacts
#########################################

def load_suite(config: ExperimentConfig) -> Suite:
    """Suite for a config, cached per suite hash within the process"""
    suite = Suite.from_config(config)
    return _SUITES.setdefault(suite.hash, suite)


def suite_corpus(suite: Suite, dataset: GuideDataset) -> Iterable[str]:
    """Training-split texts: descriptions, pool actions and gold-replay observations"""
    yield from dataset.corpus()
    for task_type in suite.task_types:
        for variation in suite.variations(task_type, "train"):
            for step in replay(suite.env(task_type, variation), suite.gold(task_type, variation)).steps:
                yield step.observation.obs
                yield step.observation.inventory
                yield step.observation.look


def guide_dataset(config: ExperimentConfig, suite: Suite) -> GuideDataset:
    return GuideDataset.from_suite(suite, config.guide.pool_variations, config.guide.negatives_per_positive)


def load_vocab(run: RunDirectory, suite: Suite, dataset: Optional[GuideDataset] = None) -> Vocabulary:
    """The run's shared vocabulary, built and saved on first use"""
    if run.vocab_path.exists():
        return Vocabulary.load(str(run.vocab_path))
    vocab = build_vocab(suite_corpus(suite, dataset or guide_dataset(run.config, suite)))
    vocab.save(str(run.vocab_path))
    logger.info(f"vocabulary of {len(vocab)} tokens saved to {run.vocab_path}")
    return vocab


def load_guide(run: RunDirectory) -> Guide:
    if not run.guide_path.exists():
        raise FileNotFoundError(f"no trained guide at {run.guide_path}; run train-guide first")
    return get_scorer("guide", guide_path=str(run.guide_path), dtype=get_dtype())


#########################################
# Stages
#########################################

def _opening_actions(env) -> int:
    env.reset()
    return len(env.valid_actions())


def run_gen_suite(run: RunDirectory) -> Dict:
    suite = load_suite(run.config)
    written = suite.write(str(run.suite_dir))
    summary = {
        "task_types": suite.task_types,
        "worlds": len(written) - 2,
        "mean_actions": {
            str(t): float(np.mean([_opening_actions(env) for env in suite.envs("train", [t])]))
            for t in suite.task_types
        },
    }
    (run.suite_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return summary


def run_train_guide(run: RunDirectory) -> Dict:
    config = run.config
    suite = load_suite(config)
    dataset = guide_dataset(config, suite)
    vocab = load_vocab(run, suite, dataset)
    guide, history = train_guide(dataset, config.guide, vocab=vocab, seed=config.seeds.shuffle, dtype=get_dtype())
    guide.save(str(run.guide_path), step=config.guide.epochs, config_hash=run.config_hash, suite_hash=run.suite_hash)
    run.guide_dir.mkdir(parents=True, exist_ok=True)
    write_tuples(str(run.guide_dir / "tuples.jsonl"), dataset.epoch(np.random.default_rng(config.seeds.shuffle)))
    (run.guide_dir / "history.json").write_text(json.dumps(history.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return history.to_dict()


def guide_report_ks(config: ExperimentConfig, mean_actions: float) -> List[int]:
    """Fixed report cutoffs, the configured k, and 10% of the mean action-set size"""
    recall_k = max(1, int(round(0.1 * mean_actions)))
    return sorted(set(REPORT_KS) | {config.guide.k, recall_k})


def run_eval_guide(run: RunDirectory, split: str = "dev") -> List[MetricRow]:
    config = run.config
    suite = load_suite(config)
    guide = load_guide(run)
    steps = collect_steps(
        suite, split, config.guide.eval_variations,
        rng=np.random.default_rng(np.random.SeedSequence([config.seeds.shuffle, 1])),
    )
    train_golds = suite.golds("train")
    scorers = {"guide": guide, **{kind: get_baseline(kind, train_golds) for kind in BASELINE_KINDS}}
    ks = guide_report_ks(config, mean_action_count(steps))
    threshold = config.guide.threshold
    rows = aggregate_report(steps, scorers, ks, threshold=threshold)
    write_guide_report(rows, ks, str(run.guide_dir), dict(run.header, split=split), threshold=threshold)
    return rows


def _explorer_factory(config: ExperimentConfig, vocab: Vocabulary, task_type: int, streams: SeedStreams):
    def build() -> Explorer:
        return Explorer(vocab, config.explorer, task_type, seed=streams.init_seed, dtype=get_dtype())
    return build


def run_train_agent(
    run: RunDirectory,
    mode: str,
    task_types: Optional[Sequence[int]] = None,
    deterministic: bool = DETERMINISTIC,
) -> Dict[int, LGEResult]:
    """
    Train one Explorer per task type in the given mode.

    Raises:
        FileNotFoundError: If an LGE mode is requested before the Guide exists
    """
    config = run.config
    suite = load_suite(config)
    lge = LGEConfig.from_experiment(config, mode, deterministic)
    guide = load_guide(run) if lge.uses_guide else None
    vocab = load_vocab(run, suite)
    results = {}
    for task_type in task_types if task_types is not None else suite.task_types:
        streams = SeedStreams(config.seeds, task_type)
        eval_envs = pick_eval_envs(suite.envs("test", [task_type]), lge.eval_variations, streams.eval)
        results[task_type] = train_lge(
            lge,
            suite.envs("train", [task_type]),
            guide,
            _explorer_factory(config, vocab, task_type, streams),
            streams,
            eval_envs=eval_envs,
            train_log=run.train_log(mode, task_type),
            eval_log=run.eval_log(mode, task_type),
            checkpoint=str(run.checkpoint_path(mode, task_type)),
            hashes=run.header,
        )
    return results


def _series_final(records: Sequence[Dict], key: str, fallback: Dict) -> Optional[float]:
    """Final score of one eval series; None when it was never measured"""
    values = [r.get(key) for r in records]
    if not values:
        return fallback[key]
    if any(v is None for v in values):
        return None
    return final_score(values)


def run_eval_agent(
    run: RunDirectory,
    mode: str,
    task_types: Optional[Sequence[int]] = None,
    deterministic: bool = DETERMINISTIC,
) -> Dict[int, Dict]:
    """
    Greedy test evaluation of the checkpointed Explorers. The reported final
    score is the mean of the last 10% of the periodic evaluations.

    Raises:
        FileNotFoundError: If a checkpoint is missing
    """
    config = run.config
    suite = load_suite(config)
    lge = LGEConfig.from_experiment(config, mode, deterministic)
    guide = load_guide(run) if lge.uses_guide else None
    summaries = {}
    for task_type in task_types if task_types is not None else suite.task_types:
        checkpoint = run.checkpoint_path(mode, task_type)
        if not checkpoint.exists():
            raise FileNotFoundError(f"no checkpoint at {checkpoint}; run train-agent --mode {mode} first")
        explorer = Explorer.load(str(checkpoint), config.explorer, dtype=get_dtype())
        streams = SeedStreams(config.seeds, task_type)
        envs = pick_eval_envs(suite.envs("test", [task_type]), lge.eval_variations, streams.eval)
        pair = evaluate_both(GreedyPolicy(explorer), guide, envs, lge.k, lge.eval_full_action_set)
        result = pair.primary
        _, records = read_jsonl(str(run.task_dir(mode, task_type) / "eval.jsonl"))
        checkpoint_scores = pair.to_record()
        summary = {
            "mode": mode,
            "task_type": task_type,
            "checkpoint_score": checkpoint_scores["score"],
            "checkpoint_score_pruned": checkpoint_scores["score_pruned"],
            "checkpoint_score_full": checkpoint_scores["score_full"],
            "final_score_pruned": _series_final(records, "score_pruned", checkpoint_scores),
            "final_score_full": _series_final(records, "score_full", checkpoint_scores),
            "returns": result.returns,
            "variations": result.variations,
            "final_score": final_score([r["score"] for r in records]) if records else result.mean,
            "eval_points": len(records),
            **run.header,
        }
        (run.task_dir(mode, task_type) / "final.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        logger.info(f"t{task_type} {mode}: final score {summary['final_score']:.3f}")
        summaries[task_type] = summary
    return summaries


def run_report(run_dirs: Sequence[str], out_dir: str) -> List[str]:
    return [str(p) for p in emit_report(run_dirs, out_dir)]


#########################################
# Acceptance
#########################################

def _with_seeds(config: ExperimentConfig, **seeds: int) -> ExperimentConfig:
    return config.model_copy(update={"seeds": config.seeds.model_copy(update=seeds)})


def measure_guide_claims(config: ExperimentConfig, seeds: Sequence[int] = (0, 1, 2), split: str = "dev") -> List[CheckResult]:
    """
    Train one Guide per shuffle seed and check its relevance claims on `split`:
    recall at 10% of the mean action-set size, MAP ordering against the gold
    baselines, percentile gold rank, and wins over same-verb distractors on
    unseen variations. Nothing is written to disk.
    """
    suite = load_suite(config)
    dataset = guide_dataset(config, suite)
    vocab = build_vocab(suite_corpus(suite, dataset))
    train_golds = suite.golds("train")
    baselines = {kind: get_baseline(kind, train_golds) for kind in BASELINE_KINDS}
    results = []
    for seed in seeds:
        guide, _ = train_guide(dataset, config.guide, vocab=vocab, seed=seed, dtype=get_dtype())
        steps = collect_steps(
            suite, split, config.guide.eval_variations,
            rng=np.random.default_rng(np.random.SeedSequence([seed, 1])),
        )
        recall_k = max(1, int(round(0.1 * mean_action_count(steps))))
        rows = aggregate_report(steps, {"guide": guide, **baselines}, (recall_k,), threshold=config.guide.threshold)
        checks = guide_claims(rows, recall_k) + [guide_generalization(*distractor_win_rate(guide, steps))]
        for check in checks:
            logger.info(f"guide seed {seed}: {check}")
            results.append(CheckResult(f"seed {seed}: {check.name}", check.passed, check.detail))
    return results


def measure_lge_claim(
    config: ExperimentConfig,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    task_types: Optional[Sequence[int]] = None,
    mode: str = "lge-fix",
) -> CheckResult:
    """
    Paired comparison of `mode` against drrn: for each rollout seed, the mean
    final score over the task types. Deterministic mode, one shared Guide
    trained with the configured shuffle seed.
    """
    suite = load_suite(config)
    dataset = guide_dataset(config, suite)
    vocab = build_vocab(suite_corpus(suite, dataset))
    guide, _ = train_guide(dataset, config.guide, vocab=vocab, seed=config.seeds.shuffle, dtype=get_dtype())
    task_types = list(task_types) if task_types is not None else suite.task_types
    scores: Dict[str, List[float]] = {"drrn": [], mode: []}
    for seed in seeds:
        seeded = _with_seeds(config, rollout=seed)
        for name in scores:
            lge = LGEConfig.from_experiment(seeded, name, deterministic=True)
            finals = []
            for task_type in task_types:
                streams = SeedStreams(seeded.seeds, task_type)
                result = train_lge(
                    lge,
                    suite.envs("train", [task_type]),
                    guide,
                    _explorer_factory(seeded, vocab, task_type, streams),
                    streams,
                    eval_envs=pick_eval_envs(suite.envs("test", [task_type]), lge.eval_variations, streams.eval),
                )
                finals.append(result.final_score)
            scores[name].append(float(np.mean(finals)))
            logger.info(f"seed {seed} {name}: mean final score {scores[name][-1]:.3f}")
    return lge_claim(scores["drrn"], scores[mode])


#########################################
# Node Functions
#########################################

def _run(state: PipelineState) -> RunDirectory:
    return RunDirectory(state["run_dir"], load_snapshot(state["run_dir"]))


def _advance(state: PipelineState, run: RunDirectory, to_stage: str, **updates) -> PipelineState:
    log_state_transition(run, state["current_stage"], to_stage)
    return {**state, **updates, "current_stage": to_stage, "error": None}


def gen_suite_node(state: PipelineState) -> PipelineState:
    run = _run(state)
    return _advance(state, run, "SUITE_READY", suite_summary=run_gen_suite(run))


def train_guide_node(state: PipelineState) -> PipelineState:
    run = _run(state)
    return _advance(state, run, "GUIDE_TRAINED", guide_history=run_train_guide(run))


def eval_guide_node(state: PipelineState) -> PipelineState:
    run = _run(state)
    rows = run_eval_guide(run)
    return _advance(state, run, "GUIDE_EVALUATED", guide_report={r.model: r.to_dict() for r in rows})


def train_agents_node(state: PipelineState) -> PipelineState:
    run = _run(state)
    for mode in state["modes"]:
        run_train_agent(run, mode, deterministic=state["deterministic"])
    return _advance(state, run, "AGENTS_TRAINED")


def eval_agents_node(state: PipelineState) -> PipelineState:
    run = _run(state)
    scores = {}
    for mode in state["modes"]:
        summaries = run_eval_agent(run, mode, deterministic=state["deterministic"])
        scores[mode] = {str(t): s["final_score"] for t, s in summaries.items()}
    return _advance(state, run, "AGENTS_EVALUATED", agent_scores=scores)


def report_node(state: PipelineState) -> PipelineState:
    run = _run(state)
    paths = run_report([str(run.root)], str(run.reports_dir))
    return _advance(state, run, "REPORTED", report_paths=paths)


#########################################
# Graph Definition
#########################################

def create_experiment_workflow() -> StateGraph:
    """
    Create the experiment pipeline graph.

    Flow:
    1. gen_suite: generate worlds, gold trajectories and splits
    2. train_guide: contrastive Guide training
    3. eval_guide: relevance metrics against the gold baselines
    4. train_agents: one Explorer per task type and mode
    5. eval_agents: greedy test evaluation
    6. report: per-task return tables
    """
    workflow = StateGraph(PipelineState)

    workflow.add_node("gen_suite", gen_suite_node)
    workflow.add_node("train_guide", train_guide_node)
    workflow.add_node("eval_guide", eval_guide_node)
    workflow.add_node("train_agents", train_agents_node)
    workflow.add_node("eval_agents", eval_agents_node)
    workflow.add_node("report", report_node)

    workflow.set_entry_point("gen_suite")
    workflow.add_edge("gen_suite", "train_guide")
    workflow.add_edge("train_guide", "eval_guide")
    workflow.add_edge("eval_guide", "train_agents")
    workflow.add_edge("train_agents", "eval_agents")
    workflow.add_edge("eval_agents", "report")
    workflow.add_edge("report", END)

    return workflow


def initial_state(run: RunDirectory, modes: Sequence[str] = MODES, deterministic: bool = DETERMINISTIC) -> PipelineState:
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode}")
    return {
        "run_dir": str(run.root),
        "config_hash": run.config_hash,
        "suite_hash": run.suite_hash,
        "current_stage": "START",
        "modes": list(modes),
        "deterministic": deterministic,
        "suite_summary": None,
        "guide_history": None,
        "guide_report": None,
        "agent_scores": {},
        "report_paths": [],
        "error": None,
    }
