"""
Self-checks and desk-scale acceptance claims.

`run_selftest` covers the fast correctness checks (gradients, closed forms,
metric oracles, planner validity, sampling statistics); the claim functions
judge measured experiment results.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch
from scipy import stats

from agents.explorer import QNetwork, StateText, Transition, action_probabilities, select_action_train
from agents.explorer.learner import td_loss, td_targets
from agents.guide.agent import GuideModel, batch_loss, contrastive_loss
from agents.guide.dataset import TrainingTuple
from agents.nn_core import ParamStore, grad_check
from agents.textcodec import build_vocab
from config.experiment import ExperimentConfig
from environment.planner import replay
from environment.suite import Suite
from evals.baselines import GoldFrequencyScorer
from evals.metrics import MetricRow, average_precision, gold_action_rank
from orchestrator.lge import choose_candidates

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4
ORACLE_TOLERANCE = 1e-12
CHI_SQUARE_ALPHA = 0.01


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __str__(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


#########################################
# Oracles
#########################################

def brute_force_average_precision(labels: Sequence[bool], scores: Sequence[float]) -> float:
    """Walk the distinct thresholds from high to low and sum recall gains times precision"""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    positives = labels.sum()
    total, previous_recall = 0.0, 0.0
    for threshold in sorted(set(scores.tolist()), reverse=True):
        predicted = scores >= threshold
        hits = int((predicted & labels).sum())
        recall = hits / positives
        total += (recall - previous_recall) * (hits / int(predicted.sum()))
        previous_recall = recall
    return total


def sort_rank(scores: Sequence[float], gold_index: int) -> int:
    """1-based position of the first entry tied with the gold score in a descending sort"""
    ordered = sorted(scores, reverse=True)
    return ordered.index(scores[gold_index]) + 1


#########################################
# Self checks
#########################################

_TEXTS = [
    "you are in the kitchen",
    "in your inventory you see nothing",
    "this room is called the kitchen you see a stove and a door to the hallway",
    "open door to hallway",
    "pick up metal pot",
    "focus on red apple",
    "your task is to boil water",
]


def _toy_transitions() -> List[Transition]:
    state = StateText(_TEXTS[0], _TEXTS[1], _TEXTS[2])
    after = StateText("the door is now open", _TEXTS[1], _TEXTS[2])
    return [
        Transition(state, _TEXTS[3], 0.25, after, (_TEXTS[4], _TEXTS[5]), False),
        Transition(after, _TEXTS[4], 0.0, state, (_TEXTS[3],), False),
        Transition(state, _TEXTS[5], 0.25, after, (), True),
    ]


def check_explorer_gradients(seed: int = 0) -> CheckResult:
    torch.manual_seed(seed)
    net = QNetwork(build_vocab(_TEXTS), hidden=6, dtype=torch.float64)
    batch = _toy_transitions()
    targets = td_targets(net, batch, discount=0.9)
    worst = grad_check(lambda: td_loss(net, batch, targets), ParamStore(net), samples=200, seed=seed)
    return CheckResult("explorer gradients", worst < GRAD_TOLERANCE, f"max relative error {worst:.2e}")


def check_guide_gradients(seed: int = 0) -> CheckResult:
    torch.manual_seed(seed)
    model = GuideModel(build_vocab(_TEXTS), hidden=6, temperature=0.5, dtype=torch.float64)
    batch = [
        TrainingTuple(0, 0, _TEXTS[6], _TEXTS[4], _TEXTS[5]),
        TrainingTuple(0, 1, _TEXTS[0], _TEXTS[3], _TEXTS[4]),
        TrainingTuple(1, 0, _TEXTS[2], _TEXTS[5], _TEXTS[3]),
    ]
    worst = grad_check(lambda: batch_loss(model, batch), ParamStore(model), samples=200, seed=seed)
    return CheckResult("guide gradients", worst < GRAD_TOLERANCE, f"max relative error {worst:.2e}")


def check_contrastive_closed_form() -> CheckResult:
    loss = contrastive_loss(torch.zeros(2, 2, dtype=torch.float64), torch.zeros(2, 2, dtype=torch.float64)).item()
    expected = 2 * math.log(4)
    return CheckResult("contrastive closed form", abs(loss - expected) < 1e-9, f"{loss:.12f} vs {expected:.12f}")


def check_metric_oracles(instances: int = 1000, seed: int = 0) -> CheckResult:
    """AP and gold rank against brute force, and RSR@k monotonicity, with heavy score ties"""
    rng = np.random.default_rng(seed)
    worst_ap, rank_errors, monotone_errors = 0.0, 0, 0
    for _ in range(instances):
        n = int(rng.integers(2, 40))
        scores = rng.integers(0, 6, size=n).astype(np.float64)
        labels = rng.random(n) < 0.3
        if not labels.any():
            labels[int(rng.integers(n))] = True
        worst_ap = max(worst_ap, abs(average_precision(labels, scores) - brute_force_average_precision(labels, scores)))

        actions = [f"a{i}" for i in range(n)]
        gold = int(rng.integers(n))
        if gold_action_rank(scores, actions, actions[gold]).rank != sort_rank(scores.tolist(), gold):
            rank_errors += 1

        order = np.argsort(-scores, kind="stable")
        relevant = {actions[i] for i in np.flatnonzero(labels)}
        recalls = [len({actions[i] for i in order[:k]} & relevant) / len(relevant) for k in range(1, n + 1)]
        if any(b < a for a, b in zip(recalls, recalls[1:])):
            monotone_errors += 1
    passed = worst_ap <= ORACLE_TOLERANCE and rank_errors == 0 and monotone_errors == 0
    return CheckResult(
        "metric oracles", passed,
        f"AP max error {worst_ap:.1e}, rank mismatches {rank_errors}, RSR monotonicity violations {monotone_errors}",
    )


def check_planner(suite: Suite) -> CheckResult:
    failures = []
    worlds = 0
    for task_type in suite.task_types:
        for split in ("train", "dev", "test"):
            for variation in suite.variations(task_type, split):
                worlds += 1
                try:
                    result = replay(suite.env(task_type, variation), suite.gold(task_type, variation))
                except ValueError as e:
                    failures.append(f"t{task_type} v{variation}: {e}")
                    continue
                if result.total_return != 1.0 or not result.solved:
                    failures.append(f"t{task_type} v{variation}: return {result.total_return}")
    return CheckResult(
        "planner validity", not failures,
        f"{worlds} worlds replayed" + (f"; {failures[:3]}" if failures else ""),
    )


def check_mixing_frequency(epsilon: float = 0.3, draws: int = 10_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    valid = [f"action {i}" for i in range(12)]
    scorer = GoldFrequencyScorer("fixture", frozenset(valid[:3]))
    full = sum(len(choose_candidates(scorer, epsilon, "task", valid, 3, rng)) == len(valid) for _ in range(draws))
    _, p = stats.chisquare([full, draws - full], [epsilon * draws, (1 - epsilon) * draws])
    return CheckResult("epsilon mixing", p > CHI_SQUARE_ALPHA, f"full-set share {full / draws:.4f}, p={p:.3f}")


def check_softmax_sampling(draws: int = 10_000, seed: int = 0) -> CheckResult:
    torch.manual_seed(seed)
    net = QNetwork(build_vocab(_TEXTS), hidden=6, dtype=torch.float64)
    state = _toy_transitions()[0].state
    candidates = _TEXTS[3:7]
    probabilities = action_probabilities(net, state, candidates)
    rng = np.random.default_rng(seed)
    counts = np.bincount([select_action_train(net, state, candidates, rng) for _ in range(draws)], minlength=len(candidates))
    _, p = stats.chisquare(counts, probabilities * draws)
    return CheckResult("softmax sampling", p > CHI_SQUARE_ALPHA, f"counts {counts.tolist()}, p={p:.3f}")


def run_selftest(config: ExperimentConfig, suite: Optional[Suite] = None) -> List[CheckResult]:
    """Run every self check; the planner check generates the configured suite"""
    checks: List[Callable[[], CheckResult]] = [
        check_explorer_gradients,
        check_guide_gradients,
        check_contrastive_closed_form,
        check_metric_oracles,
        lambda: check_planner(suite or Suite.from_config(config)),
        check_mixing_frequency,
        check_softmax_sampling,
    ]
    results = []
    for check in checks:
        result = check()
        (logger.info if result.passed else logger.error)(str(result))
        results.append(result)
    return results


#########################################
# Desk-scale claims
#########################################

def guide_claims(rows: Sequence[MetricRow], recall_k: int, min_gap: float = 0.02) -> List[CheckResult]:
    """
    Guide recall at k, Guide MAP above per-task gold above global gold, and
    the gold action's percentile rank.
    """
    by_model: Dict[str, MetricRow] = {row.model: row for row in rows}
    guide, per_task, global_ = by_model["guide"], by_model["gold_per_task"], by_model["gold_global"]
    recall = guide.rsr.get(recall_k)
    results = [
        CheckResult(f"guide RSR@{recall_k}", recall is not None and recall >= 0.90, f"{recall}"),
        CheckResult(
            "MAP ordering",
            None not in (guide.map, per_task.map, global_.map)
            and guide.map - per_task.map >= min_gap and per_task.map - global_.map >= min_gap,
            f"guide {guide.map}, gold_per_task {per_task.map}, gold_global {global_.map}",
        ),
        CheckResult("%GAR", guide.pct_gar is not None and guide.pct_gar <= 10.0, f"{guide.pct_gar}"),
    ]
    return results


def guide_generalization(win_rate: Optional[float], chance: Optional[float], min_rate: float = 0.8) -> CheckResult:
    """Gold above its same-verb distractors on unseen variations in at least `min_rate` of steps, and above chance"""
    return CheckResult(
        "guide generalization",
        win_rate is not None and win_rate >= min_rate and win_rate > chance,
        f"win rate {win_rate}, chance {chance}",
    )


def lge_claim(drrn: Sequence[float], lge: Sequence[float], min_relative: float = 0.2, alpha: float = 0.05) -> CheckResult:
    """
    Paired per-seed final returns: LGE mean at least `min_relative` above
    DRRN and a one-sided Wilcoxon signed-rank p below `alpha`.

    Raises:
        ValueError: If the samples are unpaired or empty
    """
    if len(drrn) != len(lge) or not drrn:
        raise ValueError(f"need paired seed results, got {len(drrn)} and {len(lge)}")
    base, ours = float(np.mean(drrn)), float(np.mean(lge))
    relative = (ours - base) / base if base > 0 else math.inf if ours > 0 else 0.0
    differences = np.asarray(lge) - np.asarray(drrn)
    p = 1.0 if not differences.any() else float(stats.wilcoxon(lge, drrn, alternative="greater").pvalue)
    return CheckResult(
        "LGE over DRRN",
        relative >= min_relative and p < alpha,
        f"DRRN {base:.3f}, LGE {ours:.3f}, relative {relative:+.1%}, Wilcoxon p={p:.4f}",
    )
