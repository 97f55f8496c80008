"""
Relevance metrics for action scorers: gold action rank, relevant set recall
and average precision, plus their aggregation into report rows.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import average_precision_score

from agents.base import BaseRelevanceScorer
from environment.planner import replay
from environment.suite import Suite
from evals.baselines import BaselinePredictor

logger = logging.getLogger(__name__)

REPORT_KS = (10, 20, 50)
ScorerEntry = Union[BaseRelevanceScorer, BaselinePredictor]


#########################################
# Per-step metrics
#########################################

@dataclass(frozen=True)
class GoldRank:
    rank: int
    garr: float
    percent: float


def gold_action_rank(scores: Sequence[float], actions: Sequence[str], gold: str) -> GoldRank:
    """
    Competition rank of the gold action: 1 + number of strictly better scores.

    Raises:
        ValueError: If gold is not among the actions or lengths differ
    """
    if len(scores) != len(actions):
        raise ValueError(f"{len(scores)} scores for {len(actions)} actions")
    try:
        index = list(actions).index(gold)
    except ValueError:
        raise ValueError(f"gold action '{gold}' is not in the action set")
    values = np.asarray(scores, dtype=np.float64)
    rank = 1 + int(np.sum(values > values[index]))
    return GoldRank(rank=rank, garr=1.0 / rank, percent=100.0 * rank / len(actions))


def relevant_set(gold_actions: Iterable[str], valid: Iterable[str]) -> FrozenSet[str]:
    """Gold trajectory actions that are valid at this step"""
    return frozenset(gold_actions) & frozenset(valid)


def rsr(shortlist: Iterable[str], relevant: FrozenSet[str]) -> Optional[float]:
    """Share of the relevant set inside the shortlist; None when nothing is relevant"""
    if not relevant:
        return None
    return len(frozenset(shortlist) & relevant) / len(relevant)


def average_precision(labels: Sequence[bool], scores: Sequence[float]) -> Optional[float]:
    """Step-interpolated AP with tied scores sharing a threshold; None without positives"""
    if len(labels) != len(scores):
        raise ValueError(f"{len(labels)} labels for {len(scores)} scores")
    y = np.asarray(labels, dtype=bool)
    if not y.any():
        return None
    if y.all():
        return 1.0
    return float(average_precision_score(y, np.asarray(scores, dtype=np.float64)))


#########################################
# Step collection
#########################################

@dataclass(frozen=True)
class StepEval:
    task_type: int
    variation: int
    step: int
    task: str
    valid: tuple
    gold: str
    relevant: FrozenSet[str]


def collect_steps(
    suite: Suite,
    split: str = "dev",
    variations_per_task: int = 5,
    rng: Optional[np.random.Generator] = None,
) -> List[StepEval]:
    """
    Replay the gold trajectories of sampled variations and record every step.

    Variations are sampled without replacement per task type; with no rng the
    first `variations_per_task` are used.
    """
    steps = []
    for task_type in suite.task_types:
        pool = list(suite.variations(task_type, split))
        count = min(variations_per_task, len(pool))
        if rng is not None and count < len(pool):
            chosen = sorted(pool[int(i)] for i in rng.choice(len(pool), size=count, replace=False))
        else:
            chosen = pool[:count]
        for variation in chosen:
            gold = suite.gold(task_type, variation)
            result = replay(suite.env(task_type, variation), gold)
            task = suite.spec(task_type, variation).description
            for item in result.steps:
                steps.append(StepEval(
                    task_type=task_type,
                    variation=variation,
                    step=item.step,
                    task=task,
                    valid=item.valid,
                    gold=item.action,
                    relevant=relevant_set(gold.actions, item.valid),
                ))
    logger.info(f"collected {len(steps)} gold steps from the {split} split")
    return steps


#########################################
# Aggregation
#########################################

@dataclass
class StepScore:
    """Metrics of one scorer on one step"""
    task_type: int
    variation: int
    rank: Optional[GoldRank]
    rsr: Dict[int, Optional[float]]
    ap: Optional[float]
    threshold_size: Optional[int] = None
    threshold_rsr: Optional[float] = None


@dataclass
class MetricRow:
    model: str
    rsr: Dict[int, Optional[float]]
    map: Optional[float]
    gar_mean: Optional[float]
    gar_std: Optional[float]
    pct_gar: Optional[float]
    garr: Optional[float]
    steps: int
    threshold_size: Optional[float] = None  # mean shortlist size at the relevance threshold
    threshold_rsr: Optional[float] = None
    per_task: Dict[int, "MetricRow"] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "model": self.model,
            "rsr": {str(k): v for k, v in self.rsr.items()},
            "map": self.map,
            "gar_mean": self.gar_mean,
            "gar_std": self.gar_std,
            "pct_gar": self.pct_gar,
            "garr": self.garr,
            "steps": self.steps,
            "threshold_size": self.threshold_size,
            "threshold_rsr": self.threshold_rsr,
        }


def _resolve(entry: ScorerEntry, task_type: int) -> BaseRelevanceScorer:
    return entry.scorer(task_type) if isinstance(entry, BaselinePredictor) else entry


def score_step(
    scorer: BaseRelevanceScorer,
    step: StepEval,
    ks: Sequence[int],
    threshold: Optional[float] = None,
) -> StepScore:
    """
    Ranking scorers shortlist their top-k; set-membership scorers (the gold
    baselines) shortlist their members whatever k is and have no gold rank.
    With a threshold, ranking scorers also record the size and recall of the
    shortlist of actions whose normalized score reaches it.
    """
    scores = scorer.score_actions(step.task, step.valid)
    labels = [a in step.relevant for a in step.valid]
    size, threshold_recall = None, None
    if scorer.ranks_actions:
        rank = gold_action_rank(scores, step.valid, step.gold)
        recall = {k: rsr(scorer.top_k(step.task, step.valid, k), step.relevant) for k in ks}
        if threshold is not None:
            keep = scorer.classify_relevant(step.task, step.valid, threshold)
            kept = [a for a, flag in zip(step.valid, keep) if flag]
            size, threshold_recall = len(kept), rsr(kept, step.relevant)
    else:
        rank = None
        members = scorer.shortlist(step.valid)
        recall = {k: rsr(members, step.relevant) for k in ks}
    return StepScore(
        step.task_type, step.variation, rank, recall,
        average_precision(labels, scores), size, threshold_recall,
    )


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else None


def _row(model: str, scored: Sequence[StepScore], ks: Sequence[int]) -> MetricRow:
    by_variation: Dict[tuple, List[float]] = {}
    for item in scored:
        if item.ap is not None:
            by_variation.setdefault((item.task_type, item.variation), []).append(item.ap)
    ranks = [item.rank for item in scored if item.rank is not None]
    gar = np.array([r.rank for r in ranks], dtype=np.float64)
    return MetricRow(
        model=model,
        rsr={k: _mean(item.rsr[k] for item in scored) for k in ks},
        map=_mean(float(np.mean(aps)) for aps in by_variation.values()),
        gar_mean=float(gar.mean()) if ranks else None,
        gar_std=float(gar.std()) if ranks else None,
        pct_gar=_mean(r.percent for r in ranks),
        garr=_mean(r.garr for r in ranks),
        steps=len(scored),
        threshold_size=_mean(item.threshold_size for item in scored),
        threshold_rsr=_mean(item.threshold_rsr for item in scored),
    )


def aggregate_report(
    steps: Sequence[StepEval],
    scorers: Mapping[str, ScorerEntry],
    ks: Sequence[int] = REPORT_KS,
    threshold: Optional[float] = None,
) -> List[MetricRow]:
    """
    One row per scorer: mean RSR@k, MAP (per-step AP averaged within each
    variation, then across variations), GAR mean/std, %GAR and GARR.
    Steps without a relevant action are left out of RSR; steps without a
    positive label are left out of MAP. With a threshold, ranking scorers
    also report the mean size and RSR of their thresholded shortlist.

    Raises:
        ValueError: If there are no steps
    """
    if not steps:
        raise ValueError("aggregate_report needs at least one step")
    ks = tuple(dict.fromkeys(ks))
    rows = []
    for model, entry in scorers.items():
        scored = [score_step(_resolve(entry, step.task_type), step, ks, threshold) for step in steps]
        row = _row(model, scored, ks)
        for task_type in sorted({s.task_type for s in scored}):
            row.per_task[task_type] = _row(model, [s for s in scored if s.task_type == task_type], ks)
        rows.append(row)
        logger.info(f"{model}: MAP {row.map}, RSR {row.rsr}")
    return rows


def mean_action_count(steps: Sequence[StepEval]) -> float:
    return float(np.mean([len(s.valid) for s in steps])) if steps else 0.0


def matched_distractors(step: StepEval) -> List[str]:
    """Irrelevant valid actions that share the gold action's verb"""
    verb = step.gold.split()[0]
    return [a for a in step.valid if a not in step.relevant and a.split()[0] == verb]


def distractor_win_rate(scorer: BaseRelevanceScorer, steps: Sequence[StepEval]) -> Tuple[Optional[float], Optional[float]]:
    """
    Share of steps where the gold action outscores every irrelevant action
    with the same verb, and the share a uniform random ranking would reach.
    Steps without such distractors are skipped; (None, None) if none remain.
    """
    wins, chance = [], []
    for step in steps:
        distractors = matched_distractors(step)
        if not distractors:
            continue
        scores = scorer.score_actions(step.task, [step.gold, *distractors])
        wins.append(float(np.all(scores[0] > scores[1:])))
        chance.append(1.0 / (1 + len(distractors)))
    if not wins:
        return None, None
    return float(np.mean(wins)), float(np.mean(chance))
